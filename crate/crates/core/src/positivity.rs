//! Complete-positivity diagnostic of one explicit step of the averaged local
//! master equation.
//!
//! The step map is
//!
//! ```text
//! rho -> V rho V^dagger + (dt/n) sum_k ( Af_k rho A_k + A_k rho Af_k^dagger )
//! ```
//!
//! with `V = exp(-i H dt - (dt/n) sum_k A_k Af_k)`. Written as
//! `sum_ij W_ij V_i rho V_j^dagger` over the vectors `{V, A_k, Af_k}`, its Choi
//! operator `sum_ij W_ij |V_i><V_j|` shares its nonzero spectrum with `W G`,
//! where `G_jk = <V_j|V_k> = Tr(V_j^dagger V_k)`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::filter::{filtered, CouplingChannel, SpectralDecomposition};
use crate::linalg::{self, eig_general, inner, DenseOperator, C64, I};
use crate::master::generator::averaging_shifts;

/// Eigenvalues below `-NEGATIVE_REL * max|lambda|` count as negative.
pub const NEGATIVE_REL: f64 = 1e-12;
/// Rank (by magnitude) at which the negative eigenvalue counts as overtaken.
pub const THRESHOLD_RANK: usize = 4;

/// `G_ij = Tr(V_i V_j^dagger)`.
pub fn gram_matrix(vectors: &[DenseOperator]) -> Result<DMatrix<C64>> {
    if let Some(first) = vectors.first() {
        if vectors.iter().any(|v| v.shape() != first.shape()) {
            return Err(Error::Dimension("Gram vectors of different shapes".into()));
        }
    }
    let n = vectors.len();
    Ok(DMatrix::from_fn(n, n, |i, j| linalg::trace(&(&vectors[i] * vectors[j].adjoint()))))
}

/// `G_jk = Tr(V_j^dagger V_k)`, the Gram matrix in the bra-ket order used by
/// the duality eigenproblem.
pub fn duality_gram(vectors: &[DenseOperator]) -> DMatrix<C64> {
    let n = vectors.len();
    DMatrix::from_fn(n, n, |j, k| inner(&vectors[j], &vectors[k]))
}

/// Generators of one explicit step: `V` followed by the pairs `(A_k, Af_k)`.
#[derive(Debug, Clone)]
pub struct StepMapVectors {
    pub v: DenseOperator,
    pub pairs: Vec<(DenseOperator, DenseOperator)>,
    /// Off-diagonal weight `scale * dt / n` of every pair.
    pub pair_weight: f64,
}

impl StepMapVectors {
    pub fn new(h: &DenseOperator, ch: &CouplingChannel, dt: f64, t_prime: f64, avg_points: usize) -> Result<Self> {
        Self::scaled(h, ch, dt, t_prime, avg_points, 1.0)
    }

    /// Step with the dissipative part multiplied by `scale` (used when the
    /// identity is split across several channels).
    pub fn scaled(h: &DenseOperator, ch: &CouplingChannel, dt: f64, t_prime: f64, avg_points: usize, scale: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
        }
        let spec = SpectralDecomposition::new(h)?;
        let af0 = filtered(ch, &spec)?;
        let shifts = averaging_shifts(t_prime, avg_points)?;
        let pair_weight = scale * dt / shifts.len() as f64;
        let mut decay = linalg::zeros(h.nrows());
        let mut pairs = Vec::with_capacity(shifts.len());
        for &s in &shifts {
            let a = spec.heisenberg(&ch.op, s);
            let af = spec.heisenberg(&af0, s);
            decay += &a * &af;
            pairs.push((a, af));
        }
        let gen = h * (-I * dt) - decay * C64::new(pair_weight, 0.0);
        Ok(Self { v: linalg::expm(&gen), pairs, pair_weight })
    }

    /// `[V, A_1, Af_1, A_2, Af_2, ...]`.
    pub fn vectors(&self) -> Vec<DenseOperator> {
        let mut out = vec![self.v.clone()];
        for (a, af) in &self.pairs {
            out.push(a.clone());
            out.push(af.clone());
        }
        out
    }

    /// `W_00 = 1`, `W_{A_k, Af_k} = W_{Af_k, A_k} = pair_weight`.
    pub fn weight_matrix(&self) -> DMatrix<C64> {
        let n = 1 + 2 * self.pairs.len();
        let mut w = DMatrix::zeros(n, n);
        w[(0, 0)] = C64::new(1.0, 0.0);
        for k in 0..self.pairs.len() {
            w[(1 + 2 * k, 2 + 2 * k)] = C64::new(self.pair_weight, 0.0);
            w[(2 + 2 * k, 1 + 2 * k)] = C64::new(self.pair_weight, 0.0);
        }
        w
    }

    /// The step applied to `rho` directly.
    pub fn apply(&self, rho: &DenseOperator) -> DenseOperator {
        let mut out = &self.v * rho * self.v.adjoint();
        let w = C64::new(self.pair_weight, 0.0);
        for (a, af) in &self.pairs {
            out += (af * rho * a + a * rho * af.adjoint()) * w;
        }
        out
    }

    /// Eigenpairs of `W G`: eigenvalues with their coefficient vectors.
    pub(crate) fn duality_eigen(&self) -> Result<(Vec<C64>, DMatrix<C64>, DMatrix<C64>, Vec<String>)> {
        let g = duality_gram(&self.vectors());
        let eig = eig_general(&(self.weight_matrix() * &g))?;
        Ok((eig.values, eig.vectors, g, eig.warnings))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PositivityReport {
    pub t_prime: f64,
    /// Real parts, descending by value.
    pub eigenvalues: Vec<f64>,
    /// Real parts, descending by magnitude.
    pub by_magnitude: Vec<f64>,
    /// 1-based position of the most negative eigenvalue in `by_magnitude`.
    pub rank_of_most_negative: Option<usize>,
    /// True when no eigenvalue is negative or the negative one ranks at
    /// [`THRESHOLD_RANK`] or lower.
    pub threshold_flag: bool,
    /// `max |Im lambda| / max |lambda|`.
    pub imag_ratio: f64,
    pub warnings: Vec<String>,
}

impl PositivityReport {
    pub fn most_negative(&self) -> Option<f64> {
        self.rank_of_most_negative.map(|r| self.by_magnitude[r - 1])
    }
}

/// Spectrum of the duality form for one channel and averaging window.
pub fn rho_prime_spectrum(h: &DenseOperator, ch: &CouplingChannel, dt: f64, t_prime: f64, avg_points: usize) -> Result<PositivityReport> {
    let vecs = StepMapVectors::new(h, ch, dt, t_prime, avg_points)?;
    spectrum_report(&vecs, t_prime)
}

pub(crate) fn spectrum_report(vecs: &StepMapVectors, t_prime: f64) -> Result<PositivityReport> {
    let mut warnings = Vec::new();
    let decay_norm =
        linalg::operator_norm(&vecs.pairs.iter().fold(linalg::zeros(vecs.v.nrows()), |acc, (a, af)| acc + a * af)) * vecs.pair_weight;
    if decay_norm >= 0.1 {
        warnings.push(format!("step too coarse: ||A Af|| dt = {decay_norm:.3e}"));
    }
    let (values, _, _, w) = vecs.duality_eigen()?;
    warnings.extend(w);
    let scale = values.iter().fold(0.0f64, |m, z| m.max(z.norm())).max(f64::MIN_POSITIVE);
    let imag_ratio = values.iter().fold(0.0f64, |m, z| m.max(z.im.abs())) / scale;
    if imag_ratio > 1e-9 {
        warnings.push(format!("eigenvalues carry imaginary parts up to {imag_ratio:.3e} (relative)"));
    }
    let re: Vec<f64> = values.iter().map(|z| z.re).collect();
    let mut eigenvalues = re.clone();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    let mut by_magnitude = re;
    by_magnitude.sort_by(|a, b| b.abs().total_cmp(&a.abs()).then(b.total_cmp(a)));
    let neg =
        by_magnitude.iter().enumerate().filter(|(_, &x)| x < -NEGATIVE_REL * scale).min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i + 1);
    let threshold_flag = neg.is_none_or(|r| r >= THRESHOLD_RANK);
    Ok(PositivityReport { t_prime, eigenvalues, by_magnitude, rank_of_most_negative: neg, threshold_flag, imag_ratio, warnings })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub reports: Vec<PositivityReport>,
    /// Smallest grid `T'` whose report carries the threshold flag.
    pub threshold: Option<f64>,
    /// Grid spacing.
    pub resolution: f64,
}

/// Default sweep grid: 61 points on `[0, 0.6]`.
pub const DEFAULT_SWEEP: (f64, f64, usize) = (0.0, 0.6, 61);

/// Scans `T'` over `steps` equally spaced points of `[lo, hi]`.
pub fn sweep_tprime(
    h: &DenseOperator,
    ch: &CouplingChannel,
    dt: f64,
    range: (f64, f64),
    steps: usize,
    avg_points: usize,
) -> Result<SweepResult> {
    let (lo, hi) = range;
    if !(0.0 <= lo && lo <= hi && hi <= 1.0) || steps == 0 {
        return Err(Error::InvalidParameter(format!("sweep range [{lo}, {hi}] with {steps} points")));
    }
    let resolution = if steps > 1 { (hi - lo) / (steps - 1) as f64 } else { 0.0 };
    let grid: Vec<f64> = (0..steps).map(|k| lo + k as f64 * resolution).collect();
    let run = |&tp: &f64| rho_prime_spectrum(h, ch, dt, tp, avg_points);
    #[cfg(feature = "parallel")]
    let reports: Result<Vec<_>> = {
        use rayon::prelude::*;
        grid.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let reports: Result<Vec<_>> = grid.iter().map(run).collect();
    let reports = reports?;
    let threshold = reports.iter().find(|r| r.threshold_flag).map(|r| r.t_prime);
    Ok(SweepResult { reports, threshold, resolution })
}
