//! Fixed-step classical Runge-Kutta integration of every equation variant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{CouplingChannel, FilterMode, SpectralDecomposition};
use crate::linalg::{self, hermiticity_deviation, DenseOperator, C64};
use crate::master::generator::{Corrections, DaviesGenerator, Generator, LocalGenerator};
use crate::master::integral::{HistoryBuffer, HistoryStart, IntegralGenerator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Time-averaged local master equation with each channel's own filter.
    LocalMe,
    /// Local master equation with every channel forced onto the full-line filter.
    LocalMeGibbs,
    Davies,
    Integral,
    ExactUnitary,
}

fn default_dt() -> f64 {
    0.01
}
fn default_t_prime() -> f64 {
    0.3
}
fn default_avg_points() -> usize {
    3
}
fn default_record_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    pub variant: Variant,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub horizon: f64,
    #[serde(default = "default_t_prime")]
    pub t_prime: f64,
    #[serde(default = "default_avg_points")]
    pub avg_points: usize,
    /// Memory length of the integral variant; defaults to five bath decay times.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history_span: Option<f64>,
    #[serde(default)]
    pub counterterm: bool,
    #[serde(default)]
    pub lamb_shift: bool,
    #[serde(default)]
    pub history_start: HistoryStart,
    /// Keep every n-th step.
    #[serde(default = "default_record_every")]
    pub record_every: usize,
}

impl EvolutionConfig {
    pub fn new(variant: Variant, horizon: f64) -> Self {
        Self {
            variant,
            dt: default_dt(),
            horizon,
            t_prime: default_t_prime(),
            avg_points: default_avg_points(),
            history_span: None,
            counterterm: false,
            lamb_shift: false,
            history_start: HistoryStart::default(),
            record_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.dt.is_finite() && self.dt > 0.0) {
            errs.push(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.horizon.is_finite() && self.horizon >= self.dt) {
            errs.push(format!("horizon must be >= dt, got {}", self.horizon));
        }
        if !(self.t_prime.is_finite() && self.t_prime >= 0.0) {
            errs.push(format!("t_prime must be >= 0, got {}", self.t_prime));
        }
        if self.avg_points == 0 || self.avg_points.is_multiple_of(2) {
            errs.push(format!("avg_points must be odd, got {}", self.avg_points));
        }
        if self.record_every == 0 {
            errs.push("record_every must be >= 1".into());
        }
        if let Some(s) = self.history_span {
            if !(s.is_finite() && s > 0.0) {
                errs.push(format!("history_span must be > 0, got {s}"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    fn corrections(&self) -> Corrections {
        Corrections { lamb_shift: self.lamb_shift, counterterm: self.counterterm }
    }
}

/// Sampled solution.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DenseOperator>,
}

impl Trajectory {
    /// `rho_ij(t)` for every sample.
    pub fn element(&self, i: usize, j: usize) -> Vec<C64> {
        self.states.iter().map(|r| r[(i, j)]).collect()
    }

    pub fn expectation(&self, obs: &DenseOperator) -> Vec<f64> {
        self.states.iter().map(|r| linalg::trace(&(obs * r)).re).collect()
    }

    pub fn last(&self) -> &DenseOperator {
        self.states.last().expect("trajectory is never empty")
    }
}

/// Checks the density-matrix invariants of `rho`.
pub fn validate_state(rho: &DenseOperator) -> Result<()> {
    let tr = linalg::trace(rho);
    if (tr - C64::new(1.0, 0.0)).norm() > 1e-9 {
        return Err(Error::InvalidParameter(format!("initial state has trace {tr}")));
    }
    let dev = hermiticity_deviation(rho);
    if dev > 1e-10 {
        return Err(Error::NotHermitian { deviation: dev });
    }
    let min = linalg::eig_hermitian(rho)?.values[0];
    if min < -1e-6 {
        return Err(Error::InvalidParameter(format!("initial state has eigenvalue {min}")));
    }
    Ok(())
}

const TRACE_DRIFT: f64 = 1e-6;
const HERM_DRIFT: f64 = 1e-8;

fn check(t: f64, rho: &DenseOperator) -> Result<()> {
    let trace_drift = (linalg::trace(rho) - C64::new(1.0, 0.0)).norm();
    let herm_drift = hermiticity_deviation(rho);
    if !(trace_drift <= TRACE_DRIFT && herm_drift <= HERM_DRIFT) {
        return Err(Error::Diverged { t, trace_drift, herm_drift });
    }
    Ok(())
}

/// Integrates `rho0` under the configured variant; samples every
/// `record_every` steps and always at the final time.
pub fn evolve(cfg: &EvolutionConfig, h: &DenseOperator, channels: &[CouplingChannel], rho0: &DenseOperator) -> Result<Trajectory> {
    cfg.validate()?;
    if rho0.nrows() != h.nrows() {
        return Err(Error::Dimension(format!("rho0 dim {} vs H dim {}", rho0.nrows(), h.nrows())));
    }
    validate_state(rho0)?;
    match cfg.variant {
        Variant::LocalMe => {
            let g = LocalGenerator::new(h, channels, cfg.t_prime, cfg.avg_points, cfg.corrections())?;
            Ok(rk4(cfg, &g, rho0)?)
        }
        Variant::LocalMeGibbs => {
            let full: Vec<_> = channels.iter().map(|c| c.with_mode(FilterMode::FullLine)).collect();
            let g = LocalGenerator::new(h, &full, cfg.t_prime, cfg.avg_points, cfg.corrections())?;
            Ok(rk4(cfg, &g, rho0)?)
        }
        Variant::Davies => {
            let g = DaviesGenerator::new(h, channels)?;
            Ok(rk4(cfg, &g, rho0)?)
        }
        Variant::Integral => integral(cfg, h, channels, rho0),
        Variant::ExactUnitary => unitary(cfg, h, rho0),
    }
}

fn sample_here(cfg: &EvolutionConfig, step: usize, total: usize) -> bool {
    step.is_multiple_of(cfg.record_every) || step == total
}

fn rk4<G: Generator + ?Sized>(cfg: &EvolutionConfig, g: &G, rho0: &DenseOperator) -> Result<Trajectory> {
    let n = cfg.steps();
    let dt = cfg.dt;
    let half = C64::new(0.5 * dt, 0.0);
    let full = C64::new(dt, 0.0);
    let sixth = C64::new(dt / 6.0, 0.0);
    let two = C64::new(2.0, 0.0);
    let mut rho = rho0.clone();
    let mut out = Trajectory { times: vec![0.0], states: vec![rho.clone()] };
    for step in 1..=n {
        let k1 = g.apply(&rho);
        let k2 = g.apply(&(&rho + &k1 * half));
        let k3 = g.apply(&(&rho + &k2 * half));
        let k4 = g.apply(&(&rho + &k3 * full));
        rho += (k1 + k2 * two + k3 * two + k4) * sixth;
        let t = step as f64 * dt;
        check(t, &rho)?;
        if sample_here(cfg, step, n) {
            out.times.push(t);
            out.states.push(rho.clone());
        }
    }
    Ok(out)
}

fn integral(cfg: &EvolutionConfig, h: &DenseOperator, channels: &[CouplingChannel], rho0: &DenseOperator) -> Result<Trajectory> {
    let span = match cfg.history_span {
        Some(s) => s,
        None => channels.iter().map(|c| 5.0 * c.bath.decay_time()).fold(cfg.dt, f64::max),
    };
    let g = IntegralGenerator::new(h, channels, cfg.dt, cfg.t_prime, cfg.avg_points, span, cfg.corrections(), cfg.history_start)?;
    let n = cfg.steps();
    let dt = cfg.dt;
    let half = C64::new(0.5 * dt, 0.0);
    let full = C64::new(dt, 0.0);
    let sixth = C64::new(dt / 6.0, 0.0);
    let two = C64::new(2.0, 0.0);
    let mut hist = HistoryBuffer::new(rho0.clone(), dt, g.nodes() + g.max_delay() + 2);
    let mut out = Trajectory { times: vec![0.0], states: vec![rho0.clone()] };
    for step in 1..=n {
        let rho = hist.newest().clone();
        let k1 = g.rhs(&hist, 0.0, &rho)?;
        let k2 = g.rhs(&hist, 0.5, &(&rho + &k1 * half))?;
        let k3 = g.rhs(&hist, 0.5, &(&rho + &k2 * half))?;
        let k4 = g.rhs(&hist, 1.0, &(&rho + &k3 * full))?;
        let next = rho + (k1 + k2 * two + k3 * two + k4) * sixth;
        let t = step as f64 * dt;
        check(t, &next)?;
        if sample_here(cfg, step, n) {
            out.times.push(t);
            out.states.push(next.clone());
        }
        hist.push(next);
    }
    Ok(out)
}

fn unitary(cfg: &EvolutionConfig, h: &DenseOperator, rho0: &DenseOperator) -> Result<Trajectory> {
    let spec = SpectralDecomposition::new(h)?;
    let n = cfg.steps();
    let mut out = Trajectory { times: vec![0.0], states: vec![rho0.clone()] };
    for step in 1..=n {
        if sample_here(cfg, step, n) {
            let t = step as f64 * cfg.dt;
            let u = spec.propagator(t);
            out.times.push(t);
            out.states.push(&u * rho0 * u.adjoint());
        }
    }
    Ok(out)
}

/// First time after which `|x(t) - x_inf|` stays below `|x(0) - x_inf| / e`,
/// linearly interpolated between samples.
pub fn relaxation_time(times: &[f64], values: &[f64], target: f64) -> Option<f64> {
    let d0 = (values.first()? - target).abs();
    if d0 == 0.0 {
        return Some(0.0);
    }
    let level = d0 / std::f64::consts::E;
    let mut last_above = None;
    for k in 0..values.len() {
        if (values[k] - target).abs() > level {
            last_above = Some(k);
        }
    }
    let k = last_above?;
    if k + 1 >= values.len() {
        return None;
    }
    let (a, b) = ((values[k] - target).abs(), (values[k + 1] - target).abs());
    let frac = (a - level) / (a - b);
    Some(times[k] + frac * (times[k + 1] - times[k]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::BathSpec;
    use crate::fixed_point::gibbs_state;
    use crate::linalg::{max_abs, pauli};

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn plus() -> DenseOperator {
        DenseOperator::from_element(2, 2, c(0.5))
    }

    fn reference(mode: FilterMode, a: f64) -> (DenseOperator, Vec<CouplingChannel>) {
        let h = pauli::z() * c(0.5) + pauli::x();
        let ch = CouplingChannel::new(pauli::z() * c(a), BathSpec::with_defaults(1.0).unwrap(), mode).unwrap();
        (h, vec![ch])
    }

    #[test]
    fn closed_system_matches_unitary() {
        let (h, _) = reference(FilterMode::HalfLine, 0.5);
        let mut cfg = EvolutionConfig::new(Variant::LocalMe, 5.0);
        cfg.record_every = 100;
        let a = evolve(&cfg, &h, &[], &plus()).unwrap();
        cfg.variant = Variant::ExactUnitary;
        let b = evolve(&cfg, &h, &[], &plus()).unwrap();
        assert_eq!(a.times, b.times);
        assert!(max_abs(&(a.last() - b.last())) < 1e-8);
    }

    #[test]
    fn gibbs_is_stationary_for_full_line() {
        let (h, chs) = reference(FilterMode::FullLine, 0.5);
        let g = gibbs_state(&h, 1.0).unwrap();
        let mut cfg = EvolutionConfig::new(Variant::LocalMeGibbs, 20.0);
        cfg.record_every = 500;
        let tr = evolve(&cfg, &h, &chs, &g).unwrap();
        for s in &tr.states {
            assert!(max_abs(&(s - &g)) < 1e-8);
        }
    }

    #[test]
    fn fourth_order_convergence() {
        let (h, chs) = reference(FilterMode::HalfLine, 0.5);
        let run = |dt: f64| {
            let mut cfg = EvolutionConfig::new(Variant::LocalMe, 2.0);
            cfg.dt = dt;
            evolve(&cfg, &h, &chs, &plus()).unwrap().last().clone()
        };
        let (a, b, c) = (run(0.2), run(0.1), run(0.05));
        let ratio = max_abs(&(&a - &b)) / max_abs(&(&b - &c));
        assert!(ratio > 12.0, "ratio {ratio}");
    }

    #[test]
    fn records_stride_and_final() {
        let (h, chs) = reference(FilterMode::HalfLine, 0.5);
        let mut cfg = EvolutionConfig::new(Variant::Davies, 1.05);
        cfg.record_every = 20;
        let tr = evolve(&cfg, &h, &chs, &plus()).unwrap();
        assert_eq!(tr.times.len(), 7);
        assert!((tr.times[6] - 1.05).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_state_and_config() {
        let (h, chs) = reference(FilterMode::HalfLine, 0.5);
        let cfg = EvolutionConfig::new(Variant::LocalMe, 1.0);
        assert!(evolve(&cfg, &h, &chs, &(plus() * c(2.0))).is_err());
        let mut bad = cfg.clone();
        bad.avg_points = 2;
        bad.dt = -1.0;
        match bad.validate() {
            Err(Error::Config(v)) => assert_eq!(v.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn divergence_is_reported() {
        let (h, chs) = reference(FilterMode::HalfLine, 3.0);
        let mut cfg = EvolutionConfig::new(Variant::LocalMe, 50.0);
        cfg.dt = 0.5;
        cfg.t_prime = 0.0;
        assert!(matches!(evolve(&cfg, &h, &chs, &plus()), Err(Error::Diverged { .. })));
    }

    #[test]
    fn integral_tracks_markovian_at_weak_coupling() {
        let (h, chs) = reference(FilterMode::HalfLine, 0.1);
        let mut cfg = EvolutionConfig::new(Variant::Integral, 20.0);
        cfg.counterterm = true;
        cfg.record_every = 10;
        let a = evolve(&cfg, &h, &chs, &plus()).unwrap();
        cfg.variant = Variant::LocalMe;
        let b = evolve(&cfg, &h, &chs, &plus()).unwrap();
        let mut worst = 0.0f64;
        for (k, &t) in a.times.iter().enumerate() {
            if t >= 1.0 {
                worst = worst.max((a.states[k][(0, 0)] - b.states[k][(0, 0)]).norm());
            }
        }
        assert!(worst < 0.05, "max deviation {worst}");
    }

    #[test]
    fn relaxation_time_of_exponential() {
        let t: Vec<f64> = (0..1000).map(|k| k as f64 * 0.01).collect();
        let x: Vec<f64> = t.iter().map(|t| 0.3 + 0.5 * (-t / 2.0f64).exp()).collect();
        assert!((relaxation_time(&t, &x, 0.3).unwrap() - 2.0).abs() < 1e-4);
    }

    #[test]
    fn config_defaults_from_json() {
        let cfg: EvolutionConfig = serde_json::from_str(r#"{"variant": "local_me", "horizon": 10}"#).unwrap();
        assert_eq!(cfg.dt, 0.01);
        assert_eq!(cfg.t_prime, 0.3);
        assert_eq!(cfg.avg_points, 3);
        assert!(serde_json::from_str::<EvolutionConfig>(r#"{"variant": "local_me", "horizon": 1, "dtt": 1}"#).is_err());
    }
}
