//! Browser bindings: each export returns a JSON string for the demo page.

use lme_core::bath::BathSpec;
use lme_core::filter::{CouplingChannel, FilterMode};
use lme_core::fixed_point::gibbs_state;
use lme_core::linalg::{pauli, DenseOperator, C64};
use lme_core::master::evolve::relaxation_time;
use lme_core::master::{evolve, EvolutionConfig, Variant};
use lme_core::positivity::sweep_tprime;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_HORIZON: f64 = 200.0;
const MAX_SWEEP_POINTS: usize = 201;

fn qubit(field: f64) -> DenseOperator {
    pauli::z() * C64::new(0.5, 0.0) + pauli::x() * C64::new(field, 0.0)
}

fn channel(beta: f64, mode: FilterMode) -> lme_core::Result<CouplingChannel> {
    CouplingChannel::new(pauli::z() * C64::new(0.5, 0.0), BathSpec::with_defaults(beta)?, mode)
}

fn parse_mode(name: &str) -> lme_core::Result<FilterMode> {
    match name {
        "full_line" => Ok(FilterMode::FullLine),
        "half_line" => Ok(FilterMode::HalfLine),
        other => Err(lme_core::Error::InvalidParameter(format!("unknown filter \"{other}\""))),
    }
}

#[derive(Serialize)]
struct Relaxation {
    times: Vec<f64>,
    rho11: Vec<f64>,
    coherence: Vec<f64>,
    gibbs_rho11: f64,
    relaxation_time: Option<f64>,
}

/// Single qubit `0.5 sz + field sx` coupled through `0.5 sz`, from `|+>`.
pub fn relaxation_json(field: f64, beta: f64, t_prime: f64, filter: &str, horizon: f64) -> lme_core::Result<String> {
    if !(horizon > 0.0 && horizon <= MAX_HORIZON) {
        return Err(lme_core::Error::InvalidParameter(format!("horizon must lie in (0, {MAX_HORIZON}]")));
    }
    let h = qubit(field);
    let ch = channel(beta, parse_mode(filter)?)?;
    let cfg = EvolutionConfig { t_prime, record_every: 5, ..EvolutionConfig::new(Variant::LocalMe, horizon) };
    let rho0 = DenseOperator::from_element(2, 2, C64::new(0.5, 0.0));
    let tr = evolve(&cfg, &h, &[ch], &rho0)?;
    let rho11: Vec<f64> = tr.states.iter().map(|r| r[(0, 0)].re).collect();
    let coherence = tr.states.iter().map(|r| r[(0, 1)].norm()).collect();
    let gibbs = gibbs_state(&h, beta)?[(0, 0)].re;
    let out = Relaxation {
        relaxation_time: relaxation_time(&tr.times, &rho11, *rho11.last().unwrap_or(&gibbs)),
        times: tr.times,
        rho11,
        coherence,
        gibbs_rho11: gibbs,
    };
    Ok(serde_json::to_string(&out)?)
}

#[derive(Serialize)]
struct Sweep {
    t_prime: Vec<f64>,
    /// Eigenvalues per grid point, ordered by magnitude.
    eigenvalues: Vec<Vec<f64>>,
    rank_of_most_negative: Vec<Option<usize>>,
    threshold: Option<f64>,
}

/// Duality-matrix spectrum of the one-step map on a `T'` grid.
pub fn positivity_json(field: f64, beta: f64, max_t_prime: f64, points: usize) -> lme_core::Result<String> {
    if !(2..=MAX_SWEEP_POINTS).contains(&points) {
        return Err(lme_core::Error::InvalidParameter(format!("points must lie in [2, {MAX_SWEEP_POINTS}]")));
    }
    let res = sweep_tprime(&qubit(field), &channel(beta, FilterMode::FullLine)?, 0.01, (0.0, max_t_prime), points, 3)?;
    let out = Sweep {
        t_prime: res.reports.iter().map(|r| r.t_prime).collect(),
        eigenvalues: res.reports.iter().map(|r| r.by_magnitude.clone()).collect(),
        rank_of_most_negative: res.reports.iter().map(|r| r.rank_of_most_negative).collect(),
        threshold: res.threshold,
    };
    Ok(serde_json::to_string(&out)?)
}

#[derive(Serialize)]
struct BathCurves {
    omega: Vec<f64>,
    spectral_density: Vec<f64>,
    principal_value: Vec<f64>,
    time: Vec<f64>,
    correlation_re: Vec<f64>,
    correlation_im: Vec<f64>,
    decay_time: f64,
}

/// `S(w)`, `D(w)` and `C(t)` of the calibrated Gaussian bath.
pub fn bath_json(beta: f64, t_b: f64, omega_max: f64) -> lme_core::Result<String> {
    let b = BathSpec::calibrated(beta, t_b)?;
    let n = 400;
    let omega: Vec<f64> = (0..=n).map(|k| -omega_max + 2.0 * omega_max * k as f64 / n as f64).collect();
    let span = 3.0 * b.decay_time();
    let time: Vec<f64> = (0..=n).map(|k| -span + 2.0 * span * k as f64 / n as f64).collect();
    let corr: Vec<C64> = time.iter().map(|&t| b.correlation(t)).collect();
    let out = BathCurves {
        spectral_density: omega.iter().map(|&w| b.spectral_density(w)).collect(),
        principal_value: omega.iter().map(|&w| b.pv(w)).collect(),
        omega,
        correlation_re: corr.iter().map(|z| z.re).collect(),
        correlation_im: corr.iter().map(|z| z.im).collect(),
        time,
        decay_time: b.decay_time(),
    };
    Ok(serde_json::to_string(&out)?)
}

fn js(r: lme_core::Result<String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn relaxation(field: f64, beta: f64, t_prime: f64, filter: &str, horizon: f64) -> Result<String, JsError> {
    js(relaxation_json(field, beta, t_prime, filter, horizon))
}

#[wasm_bindgen]
pub fn positivity(field: f64, beta: f64, max_t_prime: f64, points: usize) -> Result<String, JsError> {
    js(positivity_json(field, beta, max_t_prime, points))
}

#[wasm_bindgen]
pub fn bath(beta: f64, t_b: f64, omega_max: f64) -> Result<String, JsError> {
    js(bath_json(beta, t_b, omega_max))
}
