//! Exact small-bath benchmark and the two-spin bandwidth scenario.
//!
//! The explicit bath is a set of free spins, `H_b = sum (w_i / 2) sz_i` and
//! `B = sum g_i sx_i`. In its Gibbs state the correlation is
//!
//! ```text
//! C(t) = sum g_i^2 ( p_up e^{i w_i t} + p_dn e^{-i w_i t} ),  p_up = e^{-beta w/2} / (2 cosh(beta w/2))
//! ```
//!
//! so midpoint nodes with `g_i^2 = dw (S(w_i) + S(-w_i))` reproduce the target
//! `int S(w) e^{iwt} dw` on a grid with detailed balance built in.

use serde::Serialize;

use crate::bath::BathSpec;
use crate::error::{Error, Result};
use crate::filter::{CouplingChannel, FilterMode};
use crate::fixed_point::gibbs_state;
use crate::linalg::{self, kron, pauli, DenseOperator, C64};
use crate::master::evolve::{evolve, EvolutionConfig, Trajectory, Variant};
use crate::master::generator::{Corrections, Generator, LocalGenerator};

pub const MIN_SPINS: usize = 4;
pub const MAX_SPINS: usize = 10;
/// Residual above which a bath is rejected, relative to `|C(0)|`.
pub const RESIDUAL_LIMIT: f64 = 0.2;
/// Total dimension accepted by [`exact_evolve`].
pub const MAX_TOTAL_DIM: usize = 1 << 12;

/// Scanned frequency cutoffs `w_max` (41 points on `[6, 16] / (4 t_b)`).
fn cutoff_grid(t_b: f64) -> impl Iterator<Item = f64> {
    (0..41).map(move |k| (6.0 + 0.25 * k as f64) * 0.25 / t_b)
}

/// Number of sample points of the residual window `|t| <= 3 decay_time`.
const RESIDUAL_POINTS: usize = 2001;

#[derive(Debug, Clone, Serialize)]
pub struct ExplicitBath {
    pub n_spins: usize,
    pub beta: f64,
    pub frequencies: Vec<f64>,
    pub couplings: Vec<f64>,
    pub omega_max: f64,
    /// `max_t |C_bath(t) - C(t)| / |C(0)|` over `|t| <= 3 decay_time`.
    pub residual: f64,
}

impl ExplicitBath {
    /// Thermal weight of the upper level of spin `i`.
    fn p_up(&self, w: f64) -> f64 {
        let x = 0.5 * self.beta * w;
        (-x).exp() / (2.0 * x.cosh())
    }

    /// Closed-form thermal correlation of `B`.
    pub fn correlation(&self, t: f64) -> C64 {
        self.frequencies.iter().zip(&self.couplings).fold(C64::new(0.0, 0.0), |acc, (&w, &g)| {
            let pu = self.p_up(w);
            acc + C64::new(0.0, w * t).exp() * (g * g * pu) + C64::new(0.0, -w * t).exp() * (g * g * (1.0 - pu))
        })
    }

    /// Spectral weights `(w, weight)` at `+-w_i` (detailed balance exact).
    pub fn spectral_lines(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for (&w, &g) in self.frequencies.iter().zip(&self.couplings) {
            let pu = self.p_up(w);
            out.push((w, g * g * pu));
            out.push((-w, g * g * (1.0 - pu)));
        }
        out
    }

    pub fn hamiltonian(&self) -> DenseOperator {
        let n = self.n_spins;
        (0..n).fold(linalg::zeros(1 << n), |acc, i| acc + pauli::on_site(&pauli::z(), i, n) * C64::new(0.5 * self.frequencies[i], 0.0))
    }

    pub fn coupling(&self) -> DenseOperator {
        let n = self.n_spins;
        (0..n).fold(linalg::zeros(1 << n), |acc, i| acc + pauli::on_site(&pauli::x(), i, n) * C64::new(self.couplings[i], 0.0))
    }

    pub fn dim(&self) -> usize {
        1 << self.n_spins
    }
}

fn residual(target: &BathSpec, bath: &ExplicitBath) -> f64 {
    let span = 3.0 * target.decay_time();
    let c0 = target.correlation(0.0).norm();
    (0..RESIDUAL_POINTS)
        .map(|k| -span + 2.0 * span * k as f64 / (RESIDUAL_POINTS - 1) as f64)
        .map(|t| (bath.correlation(t) - target.correlation(t)).norm())
        .fold(0.0, f64::max)
        / c0
}

fn midpoint_bath(target: &BathSpec, n: usize, omega_max: f64) -> ExplicitBath {
    let dw = omega_max / n as f64;
    let frequencies: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * dw).collect();
    let couplings = frequencies.iter().map(|&w| (dw * (target.spectral_density(w) + target.spectral_density(-w))).sqrt()).collect();
    ExplicitBath { n_spins: n, beta: target.beta, frequencies, couplings, omega_max, residual: f64::NAN }
}

/// Best midpoint bath over the cutoff grid, without the residual check.
pub fn fit_bath(target: &BathSpec, n_spins: usize) -> Result<ExplicitBath> {
    if !(MIN_SPINS..=MAX_SPINS).contains(&n_spins) {
        return Err(Error::InvalidParameter(format!("n_spins must lie in [{MIN_SPINS}, {MAX_SPINS}], got {n_spins}")));
    }
    let mut best: Option<ExplicitBath> = None;
    for wm in cutoff_grid(target.t_b) {
        let mut b = midpoint_bath(target, n_spins, wm);
        b.residual = residual(target, &b);
        if best.as_ref().is_none_or(|x| b.residual < x.residual) {
            best = Some(b);
        }
    }
    Ok(best.expect("cutoff grid is non-empty"))
}

/// Fitted bath, rejected when its residual exceeds [`RESIDUAL_LIMIT`].
pub fn build_bath(target: &BathSpec, n_spins: usize) -> Result<ExplicitBath> {
    let b = fit_bath(target, n_spins)?;
    if b.residual > RESIDUAL_LIMIT {
        return Err(Error::InsufficientBath { residual: b.residual, limit: RESIDUAL_LIMIT });
    }
    Ok(b)
}

/// Reduced dynamics of `rho0_s (x) rho_Gibbs,b` under
/// `H_s + H_b + g A (x) B`, sampled every `dt` up to `horizon`.
pub fn exact_evolve(
    h_s: &DenseOperator,
    a: &DenseOperator,
    bath: &ExplicitBath,
    g_overall: f64,
    rho0_s: &DenseOperator,
    horizon: f64,
    dt: f64,
) -> Result<Trajectory> {
    let (ds, db) = (h_s.nrows(), bath.dim());
    let dim = ds * db;
    if dim > MAX_TOTAL_DIM {
        return Err(Error::Dimension(format!("total dimension {dim} exceeds {MAX_TOTAL_DIM}")));
    }
    if a.nrows() != ds || rho0_s.nrows() != ds {
        return Err(Error::Dimension("system operators do not match H_s".into()));
    }
    if !(dt > 0.0 && horizon >= 0.0) {
        return Err(Error::InvalidParameter(format!("dt = {dt}, horizon = {horizon}")));
    }
    let h_b = bath.hamiltonian();
    let h_tot = kron(h_s, &linalg::identity(db)) + kron(&linalg::identity(ds), &h_b) + kron(a, &bath.coupling()) * C64::new(g_overall, 0.0);
    let rho_b = gibbs_state(&h_b, bath.beta)?;
    let rho0 = kron(rho0_s, &rho_b);
    let eig = linalg::eig_hermitian(&h_tot)?;
    let u = &eig.vectors;
    let r0 = u.adjoint() * rho0 * u;
    // m[a][b]_jk = sum_beta U[(a, beta), j] conj(U[(b, beta), k])
    let blocks: Vec<DenseOperator> = (0..ds).map(|s| u.rows(s * db, db).into_owned()).collect();
    let mut m = Vec::with_capacity(ds * ds);
    for ba in &blocks {
        for bb in &blocks {
            m.push(ba.transpose() * bb.map(|z| z.conj()));
        }
    }
    let steps = (horizon / dt).round() as usize;
    let mut out = Trajectory { times: Vec::with_capacity(steps + 1), states: Vec::with_capacity(steps + 1) };
    for s in 0..=steps {
        let t = s as f64 * dt;
        let phase: Vec<C64> = eig.values.iter().map(|e| C64::new(0.0, -e * t).exp()).collect();
        let x = DenseOperator::from_fn(dim, dim, |j, k| r0[(j, k)] * phase[j] * phase[k].conj());
        let rho_s = DenseOperator::from_fn(ds, ds, |i, j| {
            let mij = &m[i * ds + j];
            x.iter().zip(mij.iter()).fold(C64::new(0.0, 0.0), |acc, (p, q)| acc + p * q)
        });
        out.times.push(t);
        out.states.push(rho_s);
    }
    Ok(out)
}

/// Configuration of the two-spin bandwidth scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowderParams {
    pub beta: f64,
    /// `None` uses the default width `beta / 4`.
    pub t_b: Option<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub t_prime: f64,
    pub record_every: usize,
}

impl Default for PowderParams {
    fn default() -> Self {
        Self { beta: 1.0, t_b: None, horizon: 1000.0, dt: 0.01, t_prime: 0.3, record_every: 100 }
    }
}

/// Exchange coupling between the spins; `e^{-50}` underflows against the
/// `O(100)` diagonal and contributes nothing in double precision.
pub const POWDER_EXCHANGE: f64 = 1.928_749_847_963_917_8e-22;

/// `100 sz_1 + sz_2 + e^{-50} sx_1 sx_2` and `A = 0.01 sx_2`.
pub fn powder_system() -> (DenseOperator, DenseOperator) {
    let h = pauli::string("ZI").unwrap() * C64::new(100.0, 0.0)
        + pauli::string("IZ").unwrap()
        + pauli::string("XX").unwrap() * C64::new(POWDER_EXCHANGE, 0.0);
    let a = pauli::string("IX").unwrap() * C64::new(0.01, 0.0);
    (h, a)
}

#[derive(Debug, Clone, Serialize)]
pub struct PowderReport {
    pub t_b: f64,
    pub horizon: f64,
    /// Spin-1 excited population at the horizon (starts at 1).
    pub spin1_survival: f64,
    /// `(1 - survival) / horizon`.
    pub spin1_rate: f64,
    /// `-d/dt` of the spin-1 excited population at `t = 0`.
    pub spin1_initial_rate: f64,
    /// Spin-2 relaxation time from the final population.
    pub spin2_t1: f64,
    /// `1 / (gamma_down + gamma_up)` from the Pauli rates `4 pi S(E) |A|^2`.
    pub spin2_t1_rates: f64,
    /// Set when the integration aborted.
    pub failure: Option<String>,
    #[serde(skip)]
    pub times: Vec<f64>,
    #[serde(skip)]
    pub spin1: Vec<f64>,
    #[serde(skip)]
    pub spin2: Vec<f64>,
}

/// Local master equation (full-line filter) from `|up, up>`.
pub fn powder_scenario(p: &PowderParams) -> Result<PowderReport> {
    let (h, a) = powder_system();
    let t_b = p.t_b.unwrap_or_else(|| BathSpec::default_width(p.beta));
    let bath = BathSpec::calibrated(p.beta, t_b)?;
    let ch = CouplingChannel::new(a, bath, FilterMode::FullLine)?;
    let mut rho0 = linalg::zeros(4);
    rho0[(0, 0)] = C64::new(1.0, 0.0);
    let up1 = pauli::string("ZI")? * C64::new(0.5, 0.0) + linalg::identity(4) * C64::new(0.5, 0.0);
    let up2 = pauli::string("IZ")? * C64::new(0.5, 0.0) + linalg::identity(4) * C64::new(0.5, 0.0);
    let mut cfg = EvolutionConfig::new(Variant::LocalMe, p.horizon);
    cfg.dt = p.dt;
    cfg.t_prime = p.t_prime;
    cfg.record_every = p.record_every;

    // spin-2 Pauli rates between its levels, E = -2 for the downward step
    let s = |w: f64| 4.0 * std::f64::consts::PI * bath.spectral_density(w) * 1e-4;
    let spin2_t1_rates = 1.0 / (s(-2.0) + s(2.0));
    let p2_eq = (-p.beta).exp() / ((-p.beta).exp() + p.beta.exp());

    let gen = LocalGenerator::new(&h, std::slice::from_ref(&ch), p.t_prime, 3, Corrections::default())?;
    let spin1_initial_rate = -linalg::trace(&(&up1 * gen.apply(&rho0))).re;

    let (times, spin1, spin2, failure) = match evolve(&cfg, &h, &[ch], &rho0) {
        Ok(tr) => (tr.times.clone(), tr.expectation(&up1), tr.expectation(&up2), None),
        Err(e @ Error::Diverged { .. }) => (vec![], vec![], vec![], Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let (spin1_survival, spin2_t1) = match (spin1.last(), spin2.last()) {
        (Some(&s1), Some(&s2)) => (s1, -p.horizon / ((s2 - p2_eq) / (1.0 - p2_eq)).ln()),
        _ => (f64::NAN, f64::NAN),
    };
    Ok(PowderReport {
        t_b,
        horizon: p.horizon,
        spin1_survival,
        spin1_rate: (1.0 - spin1_survival) / p.horizon,
        spin1_initial_rate,
        spin2_t1,
        spin2_t1_rates,
        failure,
        times,
        spin1,
        spin2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, trace};

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn target(beta: f64) -> BathSpec {
        BathSpec::with_defaults(beta).unwrap()
    }

    #[test]
    fn eight_spins_fit_the_target() {
        let b = build_bath(&target(1.0), 8).unwrap();
        assert!(b.residual <= 0.1, "residual {}", b.residual);
    }

    #[test]
    fn four_spins_are_rejected() {
        assert!(matches!(build_bath(&target(1.0), 4), Err(Error::InsufficientBath { .. })));
        assert!(fit_bath(&target(1.0), 3).is_err());
    }

    #[test]
    fn residual_does_not_grow_with_spins() {
        let r: Vec<f64> = [4, 6, 8].iter().map(|&n| fit_bath(&target(1.0), n).unwrap().residual).collect();
        assert!(r[0] >= r[1] && r[1] >= r[2], "{r:?}");
    }

    #[test]
    fn infinite_temperature_correlation_is_real() {
        let b = fit_bath(&target(0.0), 6).unwrap();
        for t in [0.1, 0.7, 2.3] {
            assert!(b.correlation(t).im.abs() < 1e-14);
        }
    }

    #[test]
    fn lines_obey_detailed_balance() {
        let b = fit_bath(&target(1.0), 8).unwrap();
        let lines = b.spectral_lines();
        for pair in lines.chunks(2) {
            let (w, up) = pair[0];
            let (_, dn) = pair[1];
            assert!((dn / up / (b.beta * w).exp() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn closed_form_correlation_matches_matrices() {
        let b = fit_bath(&target(1.0), 4).unwrap();
        let hb = b.hamiltonian();
        let bb = b.coupling();
        let rho = gibbs_state(&hb, 1.0).unwrap();
        let spec = crate::filter::SpectralDecomposition::new(&hb).unwrap();
        for t in [0.0, 0.4, 1.3] {
            let bt = spec.heisenberg(&bb, t);
            let direct = trace(&(&rho * bt * &bb));
            assert!((direct - b.correlation(t)).norm() < 1e-12);
        }
    }

    #[test]
    fn decoupled_bath_gives_unitary_dynamics() {
        let b = fit_bath(&target(1.0), 4).unwrap();
        let h = pauli::z() * c(0.5) + pauli::x();
        let rho0 = DenseOperator::from_element(2, 2, c(0.5));
        let tr = exact_evolve(&h, &(pauli::z() * c(0.5)), &b, 0.0, &rho0, 2.0, 0.5).unwrap();
        let spec = crate::filter::SpectralDecomposition::new(&h).unwrap();
        for (t, r) in tr.times.iter().zip(&tr.states) {
            let u = spec.propagator(*t);
            assert!(max_abs(&(r - &u * &rho0 * u.adjoint())) < 1e-12);
        }
    }

    #[test]
    fn reduced_states_are_valid() {
        let b = fit_bath(&target(1.0), 4).unwrap();
        let h = pauli::z() * c(0.5) + pauli::x();
        let rho0 = DenseOperator::from_element(2, 2, c(0.5));
        let tr = exact_evolve(&h, &(pauli::z() * c(0.5)), &b, 1.0, &rho0, 3.0, 0.25).unwrap();
        for r in &tr.states {
            assert!((trace(r) - c(1.0)).norm() < 1e-12);
            assert!(linalg::hermiticity_deviation(r) < 1e-12);
            assert!(linalg::eig_hermitian(r).unwrap().values[0] > -1e-12);
        }
    }

    #[test]
    fn total_energy_is_conserved() {
        let b = fit_bath(&target(1.0), 4).unwrap();
        let h = pauli::z() * c(0.5) + pauli::x();
        let a = pauli::z() * c(0.5);
        let h_tot = kron(&h, &linalg::identity(16)) + kron(&linalg::identity(2), &b.hamiltonian()) + kron(&a, &b.coupling());
        let rho0 = kron(&DenseOperator::from_element(2, 2, c(0.5)), &gibbs_state(&b.hamiltonian(), 1.0).unwrap());
        let e0 = trace(&(&h_tot * &rho0)).re;
        let u = linalg::expm(&(&h_tot * C64::new(0.0, -2.0)));
        let e1 = trace(&(&h_tot * (&u * &rho0 * u.adjoint()))).re;
        assert!((e1 - e0).abs() <= 1e-10 * e0.abs().max(1.0));
    }

    #[test]
    fn rejects_oversized_total_dimension() {
        let b = fit_bath(&target(1.0), 10).unwrap();
        let h = linalg::identity(8);
        assert!(exact_evolve(&h, &h, &b, 1.0, &(h.clone() * c(0.125)), 1.0, 0.1).is_err());
    }

    #[test]
    fn powder_exchange_is_invisible() {
        assert!((POWDER_EXCHANGE - (-50.0f64).exp()).abs() < 1e-36);
        let (h, _) = powder_system();
        assert_eq!(h[(0, 3)].re, POWDER_EXCHANGE);
        assert_eq!(h[(0, 0)].re + POWDER_EXCHANGE, h[(0, 0)].re);
    }
}
