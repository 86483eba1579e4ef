//! Candidate fixed points: the isolated Gibbs state, its second-order
//! perturbative correction, and the exact reduced Gibbs state of a small
//! system-plus-bath.
//!
//! In the eigenbasis of `H`, with `E_nm = E_n - E_m` and `p_k = e^{-beta E_k}`,
//! the off-diagonal correction is
//!
//! ```text
//! drho_nm = sum_k A_nk A_km [ p_k (D(E_nk) - D(E_mk)) - p_m D(E_km) + p_n D(E_kn) ] / (Z E_nm)
//! ```
//!
//! For `|E_nm|` below the pole tolerance the removable singularity is replaced by
//! the derivative in `E_n` at `E_n = E_m`:
//!
//! ```text
//! sum_k A_nk A_km [ p_k D'(E_mk) - beta p_m D(E_km) - p_m D'(E_km) ] / Z
//! ```

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::filter::{CouplingChannel, FilterMode, SpectralDecomposition};
use crate::linalg::{self, eig_general, kron, max_abs, partial_trace, DenseOperator, C64};
use crate::master::generator::{steady_state, Corrections, DaviesGenerator, Generator, LocalGenerator};

/// Relative gap below which two levels count as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;
/// Relative gap below which the derivative branch replaces the pole formula.
pub const POLE_TOL: f64 = 1e-6;
/// Largest total dimension accepted by [`reduced_gibbs`].
pub const MAX_TOTAL_DIM: usize = 1 << 12;

/// `e^{-beta H} / Tr e^{-beta H}`, exponentiated after shifting the spectrum
/// so the largest weight is one.
pub fn gibbs_state(h: &DenseOperator, beta: f64) -> Result<DenseOperator> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be >= 0, got {beta}")));
    }
    let spec = SpectralDecomposition::new(h)?;
    Ok(gibbs_from_spectrum(&spec, beta))
}

pub(crate) fn boltzmann(energies: &[f64], beta: f64) -> Vec<f64> {
    let e0 = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energies.iter().map(|e| (-beta * (e - e0)).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

fn gibbs_from_spectrum(spec: &SpectralDecomposition, beta: f64) -> DenseOperator {
    let p = boltzmann(&spec.energies, beta);
    let diag = DenseOperator::from_diagonal(&nalgebra::DVector::from_iterator(p.len(), p.iter().map(|&x| C64::new(x, 0.0))));
    linalg::hermitian_part(&spec.from_eigenbasis(&diag))
}

/// Max-norm of a generator evaluated at `rho`.
pub fn stationarity_residual<G: Generator + ?Sized>(rho: &DenseOperator, generator: &G) -> f64 {
    max_abs(&generator.apply(rho))
}

/// Off-diagonal second-order correction together with conditioning notes.
#[derive(Debug, Clone)]
pub struct PerturbativeCorrection {
    /// Correction in the computational basis; zero diagonal in the eigenbasis.
    pub delta: DenseOperator,
    /// Pairs `(n, m)` evaluated through the derivative branch.
    pub limit_pairs: Vec<(usize, usize)>,
}

/// Second-order off-diagonal correction to the Gibbs state from one channel.
///
/// The principal-value function is always the half-line one; a full-line
/// channel preserves the Gibbs state exactly and needs no correction.
pub fn perturbative_correction(h: &DenseOperator, ch: &CouplingChannel, beta: f64) -> Result<PerturbativeCorrection> {
    let spec = SpectralDecomposition::new(h)?;
    if ch.dim() != spec.dim() {
        return Err(Error::Dimension(format!("channel dim {} vs H dim {}", ch.dim(), spec.dim())));
    }
    let d = spec.dim();
    let scale = spec.energies.iter().fold(0.0f64, |m, e| m.max(e.abs())).max(1e-300);
    let bath = &ch.bath;
    let a = spec.to_eigenbasis(&ch.op);
    let p = boltzmann(&spec.energies, beta);
    let dfun = |e: f64| bath.pv(e);
    let dprime = |e: f64| bath.pv_prime(e);
    let mut delta = linalg::zeros(d);
    let mut limit_pairs = Vec::new();
    for n in 0..d {
        for m in 0..d {
            if n == m {
                continue;
            }
            let enm = spec.gap(n, m);
            if enm.abs() <= DEGENERACY_TOL * scale {
                return Err(Error::Degenerate { m, n, gap: enm });
            }
            let limit = enm.abs() < POLE_TOL * scale;
            if limit {
                limit_pairs.push((n, m));
            }
            let mut s = C64::new(0.0, 0.0);
            for k in 0..d {
                let (enk, emk, ekm, ekn) = (spec.gap(n, k), spec.gap(m, k), spec.gap(k, m), spec.gap(k, n));
                let bracket = if limit {
                    p[k] * dprime(emk) - beta * p[m] * dfun(ekm) - p[m] * dprime(ekm)
                } else {
                    (p[k] * (dfun(enk) - dfun(emk)) - p[m] * dfun(ekm) + p[n] * dfun(ekn)) / enm
                };
                s += a[(n, k)] * a[(k, m)] * bracket;
            }
            delta[(n, m)] = s;
        }
    }
    Ok(PerturbativeCorrection { delta: spec.from_eigenbasis(&delta), limit_pairs })
}

/// Diagonal (population) correction sourced by `delta_offdiag`.
///
/// Solves `M x = -diag(L(delta_offdiag))` on traceless population vectors,
/// where `M` is the population block of the secular generator and `L` the
/// half-line Markovian dissipator without averaging.
pub fn second_order_diagonal(h: &DenseOperator, ch: &CouplingChannel, delta_offdiag: &DenseOperator) -> Result<DenseOperator> {
    let spec = SpectralDecomposition::new(h)?;
    let d = spec.dim();
    let half = ch.with_mode(FilterMode::HalfLine);
    let davies = DaviesGenerator::new(h, std::slice::from_ref(&half))?;
    let local = LocalGenerator::with_spectrum(h, &spec, std::slice::from_ref(&half), 0.0, 1, Corrections::default())?;

    let mut m = nalgebra::DMatrix::<C64>::zeros(d, d);
    for k in 0..d {
        let mut e = linalg::zeros(d);
        e[(k, k)] = C64::new(1.0, 0.0);
        let out = spec.to_eigenbasis(&davies.apply(&spec.from_eigenbasis(&e)));
        for n in 0..d {
            m[(n, k)] = C64::new(out[(n, n)].re, 0.0);
        }
    }
    let scale = max_abs(&m).max(1e-300);
    let eig = eig_general(&m)?;
    let zeros = eig.values.iter().filter(|l| l.norm() < 1e-10 * scale).count();
    if zeros > 1 {
        return Err(Error::Unsupported(format!("population generator has {zeros} zero modes (reducible dynamics)")));
    }
    let src = spec.to_eigenbasis(&local.apply(delta_offdiag));
    let mut rhs = nalgebra::DVector::<C64>::from_fn(d, |n, _| C64::new(-src[(n, n)].re, 0.0));
    // the trace row is redundant; replace it with sum x = 0
    for k in 0..d {
        m[(0, k)] = C64::new(1.0, 0.0);
    }
    rhs[0] = C64::new(0.0, 0.0);
    let x = m.lu().solve(&rhs).ok_or_else(|| Error::Eigen("population generator is singular".into()))?;
    let diag = DenseOperator::from_diagonal(&x.map(|z| C64::new(z.re, 0.0)));
    Ok(spec.from_eigenbasis(&diag))
}

/// `tr_b e^{-beta (H_s + H_b + g A (x) B)} / Z`.
pub fn reduced_gibbs(
    h_s: &DenseOperator,
    a: &DenseOperator,
    h_b: &DenseOperator,
    b: &DenseOperator,
    g: f64,
    beta: f64,
) -> Result<DenseOperator> {
    let (ds, db) = (h_s.nrows(), h_b.nrows());
    if ds * db > MAX_TOTAL_DIM {
        return Err(Error::Dimension(format!("total dimension {} exceeds {MAX_TOTAL_DIM}", ds * db)));
    }
    if a.nrows() != ds || b.nrows() != db {
        return Err(Error::Dimension("coupling operators do not match H_s / H_b".into()));
    }
    let h_tot = kron(h_s, &linalg::identity(db)) + kron(&linalg::identity(ds), h_b) + kron(a, b) * C64::new(g, 0.0);
    let rho = gibbs_state(&h_tot, beta)?;
    partial_trace(&rho, &[ds, db], &[0])
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPointReport {
    #[serde(skip)]
    pub gibbs: DenseOperator,
    #[serde(skip)]
    pub delta_rho_offdiag: DenseOperator,
    #[serde(skip)]
    pub delta_rho_diag: DenseOperator,
    /// Named stationarity residuals and mismatches (max-norm).
    pub residuals: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

/// Gibbs state, perturbative correction and the residuals of every generator.
pub fn fixed_point_report(
    h: &DenseOperator,
    channels: &[CouplingChannel],
    beta: f64,
    t_prime: f64,
    avg_points: usize,
) -> Result<FixedPointReport> {
    let gibbs = gibbs_state(h, beta)?;
    let d = h.nrows();
    let mut off = linalg::zeros(d);
    let mut diag = linalg::zeros(d);
    let mut warnings = Vec::new();
    for ch in channels {
        let corr = perturbative_correction(h, ch, beta)?;
        if !corr.limit_pairs.is_empty() {
            warnings.push(format!("near-degenerate pairs {:?} used the derivative branch", corr.limit_pairs));
        }
        diag += second_order_diagonal(h, ch, &corr.delta)?;
        off += corr.delta;
    }
    let mut residuals = BTreeMap::new();
    let with_mode = |mode| channels.iter().map(|c| c.with_mode(mode)).collect::<Vec<_>>();
    let full = LocalGenerator::new(h, &with_mode(FilterMode::FullLine), t_prime, avg_points, Corrections::default())?;
    let half = LocalGenerator::new(h, &with_mode(FilterMode::HalfLine), t_prime, avg_points, Corrections::default())?;
    let davies = DaviesGenerator::new(h, channels)?;
    residuals.insert("davies_at_gibbs".into(), stationarity_residual(&gibbs, &davies));
    residuals.insert("full_line_at_gibbs".into(), stationarity_residual(&gibbs, &full));
    residuals.insert("half_line_at_gibbs".into(), stationarity_residual(&gibbs, &half));
    let markov = LocalGenerator::new(h, &with_mode(FilterMode::HalfLine), 0.0, 1, Corrections::default())?;
    let ss = steady_state(&markov)?;
    residuals.insert("half_line_steady_vs_gibbs".into(), max_abs(&(&ss - &gibbs)));
    residuals.insert("half_line_steady_vs_corrected".into(), max_abs(&(&ss - &gibbs - &off - &diag)));
    Ok(FixedPointReport { gibbs, delta_rho_offdiag: off, delta_rho_diag: diag, residuals, warnings })
}

/// Mismatch between the Markovian half-line steady state and Gibbs plus the
/// full second-order correction.
pub fn correction_mismatch(h: &DenseOperator, ch: &CouplingChannel, beta: f64) -> Result<f64> {
    let half = ch.with_mode(FilterMode::HalfLine);
    let gen = LocalGenerator::new(h, std::slice::from_ref(&half), 0.0, 1, Corrections::default())?;
    let ss = steady_state(&gen)?;
    let corr = perturbative_correction(h, &half, beta)?;
    let diag = second_order_diagonal(h, &half, &corr.delta)?;
    Ok(max_abs(&(ss - gibbs_state(h, beta)? - corr.delta - diag)))
}
