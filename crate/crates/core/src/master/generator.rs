//! Markovian generators: the time-averaged local master equation and the
//! secular (Davies) equation.
//!
//! The local generator is
//!
//! ```text
//! L(rho) = -i[H, rho] + (1/n) sum_k ( [Af_k rho, A_k] + [A_k, rho Af_k^dagger] )
//! ```
//!
//! with `A_k = A(t_k)`, `Af_k = Af(t_k)` Heisenberg-shifted to the averaging
//! points `t_k = j T'`, `j = -m..m`, `n = 2m + 1`. Every generator is applied in
//! the explicit linear form so that it acts correctly on non-Hermitian
//! matrices as well.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::filter::{filtered, CouplingChannel, SpectralDecomposition};
use crate::linalg::{self, devectorize, max_abs, vectorize, DenseOperator, C64, I};

/// A linear map on `d x d` operators.
pub trait Generator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, rho: &DenseOperator) -> DenseOperator;
}

/// `D(0) A^2` for the channel's bath.
pub fn lamb_shift(ch: &CouplingChannel) -> Result<DenseOperator> {
    let d0 = ch.bath.pv(0.0);
    if !d0.is_finite() {
        return Err(Error::InvalidParameter("D(0) overflows for this bath".into()));
    }
    Ok(&ch.op * &ch.op * C64::new(d0, 0.0))
}

/// Averaging shifts `j T'` for `j = -m..=m`.
pub fn averaging_shifts(t_prime: f64, avg_points: usize) -> Result<Vec<f64>> {
    if avg_points == 0 || avg_points.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!("avg_points must be odd, got {avg_points}")));
    }
    if !(t_prime.is_finite() && t_prime >= 0.0) {
        return Err(Error::InvalidParameter(format!("T' must be >= 0, got {t_prime}")));
    }
    let m = (avg_points / 2) as i64;
    Ok((-m..=m).map(|j| j as f64 * t_prime).collect())
}

/// Hamiltonian corrections shared by the generators.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Corrections {
    /// `H -> H + sum D(0) A^2`.
    pub lamb_shift: bool,
    /// `H -> H - (1/n) sum_k D(0) A_k^2`.
    pub counterterm: bool,
}

pub(crate) fn effective_hamiltonian(
    h: &DenseOperator,
    spec: &SpectralDecomposition,
    channels: &[CouplingChannel],
    shifts: &[f64],
    corr: Corrections,
) -> Result<DenseOperator> {
    let mut h_eff = h.clone();
    for ch in channels {
        if corr.lamb_shift {
            h_eff += lamb_shift(ch)?;
        }
        if corr.counterterm {
            let w = 1.0 / shifts.len() as f64;
            for &t in shifts {
                let a = spec.heisenberg(&ch.op, t);
                let d0 = ch.bath.pv(0.0);
                if !d0.is_finite() {
                    return Err(Error::InvalidParameter("D(0) overflows for this bath".into()));
                }
                h_eff -= &a * &a * C64::new(w * d0, 0.0);
            }
        }
    }
    Ok(h_eff)
}

#[derive(Debug, Clone)]
struct Term {
    a: DenseOperator,
    af: DenseOperator,
    af_dag: DenseOperator,
}

/// Time-averaged local master equation.
#[derive(Debug, Clone)]
pub struct LocalGenerator {
    dim: usize,
    /// `H_eff - i w sum_k A_k Af_k`; the anti-Hermitian part carries the decay.
    g: DenseOperator,
    g_dag: DenseOperator,
    terms: Vec<Term>,
    weight: f64,
}

impl LocalGenerator {
    pub fn new(h: &DenseOperator, channels: &[CouplingChannel], t_prime: f64, avg_points: usize, corr: Corrections) -> Result<Self> {
        let spec = SpectralDecomposition::new(h)?;
        Self::with_spectrum(h, &spec, channels, t_prime, avg_points, corr)
    }

    pub fn with_spectrum(
        h: &DenseOperator,
        spec: &SpectralDecomposition,
        channels: &[CouplingChannel],
        t_prime: f64,
        avg_points: usize,
        corr: Corrections,
    ) -> Result<Self> {
        let dim = h.nrows();
        let shifts = averaging_shifts(t_prime, avg_points)?;
        let weight = 1.0 / shifts.len() as f64;
        let mut terms = Vec::new();
        let mut decay = linalg::zeros(dim);
        for ch in channels {
            if ch.dim() != dim {
                return Err(Error::Dimension(format!("channel dim {} vs H dim {dim}", ch.dim())));
            }
            let af0 = filtered(ch, spec)?;
            for &t in &shifts {
                let a = spec.heisenberg(&ch.op, t);
                let af = spec.heisenberg(&af0, t);
                decay += &a * &af;
                terms.push(Term { af_dag: af.adjoint(), a, af });
            }
        }
        let h_eff = effective_hamiltonian(h, spec, channels, &shifts, corr)?;
        let g = h_eff - decay * (I * weight);
        Ok(Self { dim, g_dag: g.adjoint(), g, terms, weight })
    }

    /// Shift-averaged `(1/n) sum_k A_k Af_k`.
    pub fn decay_operator(&self) -> DenseOperator {
        let mut k = linalg::zeros(self.dim);
        for t in &self.terms {
            k += &t.a * &t.af;
        }
        k * C64::new(self.weight, 0.0)
    }

    /// `(A_k, Af_k)` pairs in shift order, channel-major.
    pub fn shifted_pairs(&self) -> Vec<(DenseOperator, DenseOperator)> {
        self.terms.iter().map(|t| (t.a.clone(), t.af.clone())).collect()
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }
}

impl Generator for LocalGenerator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, rho: &DenseOperator) -> DenseOperator {
        let mut out = (&self.g * rho - rho * &self.g_dag) * (-I);
        let w = C64::new(self.weight, 0.0);
        for t in &self.terms {
            out += (&t.af * rho * &t.a + &t.a * rho * &t.af_dag) * w;
        }
        out
    }
}

/// Right-hand side of the local master equation at `rho`.
pub fn rhs_local_me(
    rho: &DenseOperator,
    h: &DenseOperator,
    channels: &[CouplingChannel],
    t_prime: f64,
    avg_points: usize,
) -> Result<DenseOperator> {
    let g = LocalGenerator::new(h, channels, t_prime, avg_points, Corrections::default())?;
    Ok(g.apply(rho))
}

/// Gaps closer than this are treated as one secular block.
pub const GAP_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
struct SecularBlock {
    a: DenseOperator,
    a_dag: DenseOperator,
    af: DenseOperator,
    af_dag: DenseOperator,
    a_dag_af: DenseOperator,
    af_dag_a: DenseOperator,
}

/// Secular generator: `A` and `Af` split into Bohr-frequency components.
#[derive(Debug, Clone)]
pub struct DaviesGenerator {
    dim: usize,
    h: DenseOperator,
    blocks: Vec<SecularBlock>,
}

impl DaviesGenerator {
    pub fn new(h: &DenseOperator, channels: &[CouplingChannel]) -> Result<Self> {
        let spec = SpectralDecomposition::new(h)?;
        let dim = h.nrows();
        let scale = spec.energies.iter().fold(1.0f64, |m, e| m.max(e.abs()));
        let mut blocks = Vec::new();
        for ch in channels {
            if ch.dim() != dim {
                return Err(Error::Dimension(format!("channel dim {} vs H dim {dim}", ch.dim())));
            }
            let ae = spec.to_eigenbasis(&ch.op);
            let afe = spec.to_eigenbasis(&filtered(ch, &spec)?);
            let mut freqs: Vec<f64> = Vec::new();
            for m in 0..dim {
                for n in 0..dim {
                    let w = spec.gap(m, n);
                    if !freqs.iter().any(|&f| (f - w).abs() <= GAP_TOL * scale) {
                        freqs.push(w);
                    }
                }
            }
            freqs.sort_by(f64::total_cmp);
            for w in freqs {
                let mut a = linalg::zeros(dim);
                let mut af = linalg::zeros(dim);
                for m in 0..dim {
                    for n in 0..dim {
                        if (spec.gap(m, n) - w).abs() <= GAP_TOL * scale {
                            a[(m, n)] = ae[(m, n)];
                            af[(m, n)] = afe[(m, n)];
                        }
                    }
                }
                if max_abs(&a) == 0.0 {
                    continue;
                }
                let a = spec.from_eigenbasis(&a);
                let af = spec.from_eigenbasis(&af);
                let a_dag = a.adjoint();
                let af_dag = af.adjoint();
                blocks.push(SecularBlock { a_dag_af: &a_dag * &af, af_dag_a: &af_dag * &a, a, a_dag, af, af_dag });
            }
        }
        Ok(Self { dim, h: h.clone(), blocks })
    }
}

impl Generator for DaviesGenerator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, rho: &DenseOperator) -> DenseOperator {
        let mut out = (&self.h * rho - rho * &self.h) * (-I);
        for b in &self.blocks {
            out += &b.af * rho * &b.a_dag - &b.a_dag_af * rho + &b.a * rho * &b.af_dag - rho * &b.af_dag_a;
        }
        out
    }
}

pub fn rhs_davies(rho: &DenseOperator, h: &DenseOperator, channels: &[CouplingChannel]) -> Result<DenseOperator> {
    Ok(DaviesGenerator::new(h, channels)?.apply(rho))
}

/// Matrix of the generator on row-major vectorized operators.
pub fn superoperator<G: Generator + ?Sized>(g: &G) -> DMatrix<C64> {
    let d = g.dim();
    let mut l = DMatrix::zeros(d * d, d * d);
    let mut basis = linalg::zeros(d);
    for i in 0..d {
        for j in 0..d {
            basis[(i, j)] = C64::new(1.0, 0.0);
            let col = vectorize(&g.apply(&basis));
            l.set_column(i * d + j, &col);
            basis[(i, j)] = C64::new(0.0, 0.0);
        }
    }
    l
}

/// Unit-trace null vector of the generator.
pub fn steady_state<G: Generator + ?Sized>(g: &G) -> Result<DenseOperator> {
    let d = g.dim();
    let mut l = superoperator(g);
    for k in 0..d * d {
        l[(0, k)] = C64::new(0.0, 0.0);
    }
    for i in 0..d {
        l[(0, i * d + i)] = C64::new(1.0, 0.0);
    }
    let mut rhs = nalgebra::DVector::zeros(d * d);
    rhs[0] = C64::new(1.0, 0.0);
    let x = l.lu().solve(&rhs).ok_or_else(|| Error::Eigen("generator has no unique stationary state".into()))?;
    let rho = devectorize(&x, d)?;
    Ok(linalg::hermitian_part(&rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::BathSpec;
    use crate::filter::FilterMode;
    use crate::fixed_point::gibbs_state;
    use crate::linalg::{pauli, trace};

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn reference(mode: FilterMode) -> (DenseOperator, Vec<CouplingChannel>) {
        let h = pauli::z() * c(0.5) + pauli::x();
        let ch = CouplingChannel::new(pauli::z() * c(0.5), BathSpec::with_defaults(1.0).unwrap(), mode).unwrap();
        (h, vec![ch])
    }

    fn random_state(d: usize, seed: u64) -> DenseOperator {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let m = DenseOperator::from_fn(d, d, |_, _| C64::new(next(), next()));
        let r = &m * m.adjoint();
        let tr = trace(&r);
        r / tr
    }

    /// Term-by-term evaluation straight from the commutator form.
    fn direct_rhs(rho: &DenseOperator, h: &DenseOperator, ch: &CouplingChannel, t_prime: f64) -> DenseOperator {
        let spec = SpectralDecomposition::new(h).unwrap();
        let af = filtered(ch, &spec).unwrap();
        let mut out = linalg::commutator(h, rho) * (-I);
        for t in [-t_prime, 0.0, t_prime] {
            let a = crate::filter::heisenberg(&ch.op, h, t);
            let f = crate::filter::heisenberg(&af, h, t);
            out += (linalg::commutator(&(&f * rho), &a) + linalg::commutator(&a, &(rho * f.adjoint()))) / c(3.0);
        }
        out
    }

    #[test]
    fn matches_commutator_form() {
        let (h, chs) = reference(FilterMode::HalfLine);
        let rho = random_state(2, 3);
        let got = rhs_local_me(&rho, &h, &chs, 0.3, 3).unwrap();
        assert!(max_abs(&(got - direct_rhs(&rho, &h, &chs[0], 0.3))) < 1e-13);
    }

    #[test]
    fn closed_system_limit() {
        let (h, _) = reference(FilterMode::HalfLine);
        let rho = random_state(2, 4);
        let got = rhs_local_me(&rho, &h, &[], 0.3, 3).unwrap();
        assert!(max_abs(&(got - linalg::commutator(&h, &rho) * (-I))) < 1e-15);
    }

    #[test]
    fn full_line_preserves_gibbs() {
        let (h, chs) = reference(FilterMode::FullLine);
        let g = gibbs_state(&h, 1.0).unwrap();
        let r = rhs_local_me(&g, &h, &chs, 0.3, 3).unwrap();
        assert!(max_abs(&r) <= 1e-12 * 0.25);
    }

    #[test]
    fn rhs_is_traceless() {
        let (h, chs) = reference(FilterMode::HalfLine);
        for seed in 0..5 {
            let r = rhs_local_me(&random_state(2, seed), &h, &chs, 0.3, 5).unwrap();
            assert!(trace(&r).norm() < 1e-14);
        }
    }

    #[test]
    fn even_avg_points_rejected() {
        assert!(averaging_shifts(0.3, 2).is_err());
        assert_eq!(averaging_shifts(0.3, 5).unwrap(), vec![-0.6, -0.3, 0.0, 0.3, 0.6]);
    }

    #[test]
    fn davies_annihilates_gibbs() {
        for mode in [FilterMode::FullLine, FilterMode::HalfLine] {
            let (h, chs) = reference(mode);
            let g = gibbs_state(&h, 1.0).unwrap();
            assert!(max_abs(&rhs_davies(&g, &h, &chs).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn davies_with_zero_hamiltonian_is_local() {
        let h = linalg::zeros(2);
        let ch =
            CouplingChannel::new(pauli::x() * c(0.3) + pauli::z() * c(0.2), BathSpec::with_defaults(1.0).unwrap(), FilterMode::HalfLine)
                .unwrap();
        let rho = random_state(2, 9);
        let a = rhs_davies(&rho, &h, std::slice::from_ref(&ch)).unwrap();
        let b = rhs_local_me(&rho, &h, &[ch], 0.0, 1).unwrap();
        assert!(max_abs(&(a - b)) < 1e-12);
    }

    #[test]
    fn davies_population_sector_decouples() {
        let h = DenseOperator::from_diagonal(&nalgebra::DVector::from_vec(vec![c(-0.7), c(0.1), c(1.3)]));
        let mut a = DenseOperator::from_fn(3, 3, |i, j| C64::new(0.3 + 0.1 * (i + j) as f64, 0.05 * (i as f64 - j as f64)));
        a = linalg::hermitian_part(&a);
        let ch = CouplingChannel::new(a, BathSpec::with_defaults(1.0).unwrap(), FilterMode::HalfLine).unwrap();
        let rho = DenseOperator::from_diagonal(&nalgebra::DVector::from_vec(vec![c(0.5), c(0.3), c(0.2)]));
        let r = rhs_davies(&rho, &h, &[ch]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert!(r[(i, j)].norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn superoperator_reproduces_apply() {
        let (h, chs) = reference(FilterMode::HalfLine);
        let g = LocalGenerator::new(&h, &chs, 0.3, 3, Corrections::default()).unwrap();
        let l = superoperator(&g);
        let m = DenseOperator::from_fn(2, 2, |i, j| C64::new(i as f64 - 0.3, j as f64 + 0.7));
        let via = devectorize(&(l * vectorize(&m)), 2).unwrap();
        assert!(max_abs(&(via - g.apply(&m))) < 1e-14);
    }

    #[test]
    fn steady_state_of_full_line_is_gibbs() {
        let (h, chs) = reference(FilterMode::FullLine);
        let g = LocalGenerator::new(&h, &chs, 0.3, 3, Corrections::default()).unwrap();
        let ss = steady_state(&g).unwrap();
        assert!(max_abs(&(ss - gibbs_state(&h, 1.0).unwrap())) < 1e-12);
    }

    #[test]
    fn lamb_shift_values() {
        let ch = CouplingChannel::new(pauli::z() * c(0.5), BathSpec::with_defaults(1.0).unwrap(), FilterMode::HalfLine).unwrap();
        let d0 = ch.bath.pv(0.0);
        assert!(max_abs(&(lamb_shift(&ch).unwrap() - linalg::identity(2) * c(0.25 * d0))) < 1e-15);
        let hot = CouplingChannel::new(pauli::x(), BathSpec::with_defaults(0.0).unwrap(), FilterMode::HalfLine).unwrap();
        assert_eq!(max_abs(&lamb_shift(&hot).unwrap()), 0.0);
    }
}
