//! Strict JSON run configuration.
//!
//! Energies are in units of the local term norm and times in its inverse.
//! Parsing never stops at the first problem: unknown keys, missing fields,
//! type errors and semantic violations are all collected.

use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::bath::BathSpec;
use crate::error::{Error, Result};
use crate::filter::{CouplingChannel, FilterMode};
use crate::linalg::{self, pauli, DenseOperator, C64};
use crate::master::evolve::EvolutionConfig;
use crate::unravel::SamplingRule;

use super::Scenario;

pub const SCHEMA_VERSION: u32 = 1;

/// One Hamiltonian term `coeff * P`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PauliTerm {
    pub pauli: String,
    pub coeff: f64,
}

/// Normalization of the bath spectral density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum BathNorm {
    #[default]
    Calibrated,
    Unit,
    Value(f64),
}

fn default_beta() -> f64 {
    1.0
}
fn default_filter() -> FilterMode {
    FilterMode::FullLine
}

/// Coupling `weight * P` to a Gaussian bath.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub pauli: String,
    pub weight: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    /// Defaults to `beta / 4`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_b: Option<f64>,
    #[serde(default)]
    pub norm: BathNorm,
    #[serde(default = "default_filter")]
    pub filter: FilterMode,
}

impl ChannelConfig {
    pub fn bath(&self) -> Result<BathSpec> {
        let t_b = self.t_b.unwrap_or_else(|| BathSpec::default_width(self.beta));
        match self.norm {
            BathNorm::Calibrated => BathSpec::calibrated(self.beta, t_b),
            BathNorm::Unit => BathSpec::unit(self.beta, t_b),
            BathNorm::Value(n) => BathSpec::new(self.beta, t_b, n),
        }
    }

    pub fn build(&self) -> Result<CouplingChannel> {
        let op = pauli::string(&self.pauli)? * C64::new(self.weight, 0.0);
        CouplingChannel::new(op, self.bath()?, self.filter)
    }
}

fn default_n_traj() -> usize {
    4000
}
fn default_record_times() -> Vec<f64> {
    vec![1.0, 5.0, 20.0]
}
fn default_sweep() -> (f64, f64, usize) {
    crate::positivity::DEFAULT_SWEEP
}
fn default_n_spins() -> usize {
    8
}
fn default_forced_t_b() -> f64 {
    0.005
}
fn default_epsilons() -> Vec<f64> {
    vec![1.0, 0.5, 0.25]
}

/// Scenario-specific knobs; each scenario reads only its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParams {
    #[serde(default = "default_n_traj")]
    pub n_traj: usize,
    #[serde(default = "default_record_times")]
    pub record_times: Vec<f64>,
    #[serde(default)]
    pub sampling: SamplingRule,
    /// Absolute tolerance for dropped negative Gram eigenvalues.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negativity_tol: Option<f64>,
    /// `(min, max, points)` of the `T'` grid.
    #[serde(default = "default_sweep")]
    pub sweep: (f64, f64, usize),
    #[serde(default = "default_n_spins")]
    pub n_spins: usize,
    #[serde(default = "default_forced_t_b")]
    pub forced_t_b: f64,
    /// Evaluation time of the error tables; defaults to the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_time: Option<f64>,
    /// Coupling scales of the fixed-point mismatch study.
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            n_traj: default_n_traj(),
            record_times: default_record_times(),
            sampling: SamplingRule::default(),
            negativity_tol: None,
            sweep: default_sweep(),
            n_spins: default_n_spins(),
            forced_t_b: default_forced_t_b(),
            budget_time: None,
            epsilons: default_epsilons(),
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub scenario: Scenario,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hamiltonian: Vec<PauliTerm>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channels: Vec<ChannelConfig>,
    pub evolution: EvolutionConfig,
    /// One of `0 1 + -` per qubit; defaults to all `+`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<String>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: ScenarioParams,
}

impl ScenarioConfig {
    /// Qubit count implied by the Pauli strings (0 when none are given).
    pub fn n_qubits(&self) -> usize {
        self.hamiltonian.iter().map(|t| t.pauli.len()).chain(self.channels.iter().map(|c| c.pauli.len())).next().unwrap_or(0)
    }

    pub fn hamiltonian_matrix(&self) -> Result<DenseOperator> {
        let n = self.n_qubits();
        let mut h = linalg::zeros(1 << n);
        for t in &self.hamiltonian {
            h += pauli::string(&t.pauli)? * C64::new(t.coeff, 0.0);
        }
        Ok(h)
    }

    pub fn coupling_channels(&self) -> Result<Vec<CouplingChannel>> {
        self.channels.iter().map(ChannelConfig::build).collect()
    }

    /// Pure product state as a density matrix.
    pub fn initial_density(&self) -> Result<DenseOperator> {
        let psi = self.initial_vector()?;
        Ok(&psi * psi.adjoint())
    }

    pub fn initial_vector(&self) -> Result<linalg::OperatorVector> {
        let n = self.n_qubits();
        let spec = self.initial_state.clone().unwrap_or_else(|| "+".repeat(n));
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut psi = linalg::OperatorVector::from_element(1, C64::new(1.0, 0.0));
        for c in spec.chars() {
            let q = match c {
                '0' => [1.0, 0.0],
                '1' => [0.0, 1.0],
                '+' => [h, h],
                '-' => [h, -h],
                _ => return Err(Error::InvalidParameter(format!("bad initial-state letter '{c}'"))),
            };
            let q = linalg::OperatorVector::from_iterator(2, q.iter().map(|&x| C64::new(x, 0.0)));
            psi = psi.kronecker(&q);
        }
        Ok(psi)
    }

    /// Semantic checks on an already typed config.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        semantic_errors(self, &mut errs);
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

const TOP_KEYS: &[&str] =
    &["schema_version", "scenario", "hamiltonian", "channels", "evolution", "initial_state", "output_dir", "seed", "params"];
const TOP_REQUIRED: &[&str] = &["schema_version", "scenario", "evolution"];
const EVOLUTION_KEYS: &[&str] =
    &["variant", "dt", "horizon", "t_prime", "avg_points", "history_span", "counterterm", "lamb_shift", "history_start", "record_every"];
const EVOLUTION_REQUIRED: &[&str] = &["variant", "horizon"];
const TERM_KEYS: &[&str] = &["pauli", "coeff"];
const CHANNEL_KEYS: &[&str] = &["pauli", "weight", "beta", "t_b", "norm", "filter"];
const CHANNEL_REQUIRED: &[&str] = &["pauli", "weight"];
const PARAM_KEYS: &[&str] =
    &["n_traj", "record_times", "sampling", "negativity_tol", "sweep", "n_spins", "forced_t_b", "budget_time", "epsilons"];

fn check_keys(path: &str, obj: &Map<String, Value>, allowed: &[&str], required: &[&str], errs: &mut Vec<String>) {
    for k in obj.keys() {
        if !allowed.contains(&k.as_str()) {
            errs.push(format!("{path}: unknown key \"{k}\" (allowed: {})", allowed.join(", ")));
        }
    }
    for r in required {
        if !obj.contains_key(*r) {
            errs.push(format!("{path}: missing required field \"{r}\""));
        }
    }
}

fn typed<T: DeserializeOwned>(path: &str, v: &Value, errs: &mut Vec<String>) -> Option<T> {
    match serde_json::from_value(v.clone()) {
        Ok(x) => Some(x),
        Err(e) => {
            errs.push(format!("{path}: {e}"));
            None
        }
    }
}

fn check<T: DeserializeOwned>(path: &str, v: &Value, errs: &mut Vec<String>) {
    let _ = typed::<T>(path, v, errs);
}

fn as_object<'a>(path: &str, v: &'a Value, errs: &mut Vec<String>) -> Option<&'a Map<String, Value>> {
    let o = v.as_object();
    if o.is_none() {
        errs.push(format!("{path}: expected an object"));
    }
    o
}

fn check_list(path: &str, v: &Value, allowed: &[&str], required: &[&str], errs: &mut Vec<String>) {
    match v.as_array() {
        Some(items) => {
            for (i, item) in items.iter().enumerate() {
                let p = format!("{path}[{i}]");
                if let Some(o) = as_object(&p, item, errs) {
                    check_keys(&p, o, allowed, required, errs);
                }
            }
        }
        None => errs.push(format!("{path}: expected an array")),
    }
}

/// Parses and validates, reporting every violation at once.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("invalid JSON: {e}")]))?;
    let mut errs = Vec::new();
    let Some(obj) = as_object("config", &root, &mut errs) else {
        return Err(Error::Config(errs));
    };
    check_keys("config", obj, TOP_KEYS, TOP_REQUIRED, &mut errs);

    if let Some(v) = obj.get("schema_version") {
        if let Some(s) = typed::<u32>("schema_version", v, &mut errs) {
            if s != SCHEMA_VERSION {
                errs.push(format!("schema_version: unsupported version {s} (expected {SCHEMA_VERSION})"));
            }
        }
    }
    if let Some(v) = obj.get("scenario") {
        match v.as_str() {
            Some(name) if Scenario::from_name(name).is_none() => errs.push(format!(
                "scenario: unknown scenario \"{name}\" (valid: {})",
                Scenario::ALL.iter().map(|s| s.name()).collect::<Vec<_>>().join(", ")
            )),
            Some(_) => {}
            None => errs.push("scenario: expected a string".into()),
        }
    }
    if let Some(v) = obj.get("evolution") {
        if let Some(o) = as_object("evolution", v, &mut errs) {
            check_keys("evolution", o, EVOLUTION_KEYS, EVOLUTION_REQUIRED, &mut errs);
            for (k, x) in o {
                let p = format!("evolution.{k}");
                match k.as_str() {
                    "variant" => check::<crate::master::evolve::Variant>(&p, x, &mut errs),
                    "dt" | "horizon" | "t_prime" => check::<f64>(&p, x, &mut errs),
                    "history_span" => check::<Option<f64>>(&p, x, &mut errs),
                    "avg_points" | "record_every" => check::<usize>(&p, x, &mut errs),
                    "counterterm" | "lamb_shift" => check::<bool>(&p, x, &mut errs),
                    "history_start" => check::<crate::master::integral::HistoryStart>(&p, x, &mut errs),
                    _ => {}
                }
            }
        }
    }
    if let Some(v) = obj.get("hamiltonian") {
        check_list("hamiltonian", v, TERM_KEYS, TERM_KEYS, &mut errs);
        if let Some(items) = v.as_array() {
            for (i, item) in items.iter().enumerate() {
                if item.as_object().is_some_and(|o| TERM_KEYS.iter().all(|k| o.contains_key(*k))) {
                    check::<PauliTerm>(&format!("hamiltonian[{i}]"), &strip(item, TERM_KEYS), &mut errs);
                }
            }
        }
    }
    if let Some(v) = obj.get("channels") {
        check_list("channels", v, CHANNEL_KEYS, CHANNEL_REQUIRED, &mut errs);
        if let Some(items) = v.as_array() {
            for (i, item) in items.iter().enumerate() {
                if let Some(o) = item.as_object() {
                    for (k, x) in o {
                        let p = format!("channels[{i}].{k}");
                        match k.as_str() {
                            "pauli" => check::<String>(&p, x, &mut errs),
                            "weight" | "beta" => check::<f64>(&p, x, &mut errs),
                            "t_b" => check::<Option<f64>>(&p, x, &mut errs),
                            "norm" => check::<BathNorm>(&p, x, &mut errs),
                            "filter" => check::<FilterMode>(&p, x, &mut errs),
                            _ => {}
                        }
                    }
                }
            }
        }
    }
    if let Some(v) = obj.get("initial_state") {
        check::<Option<String>>("initial_state", v, &mut errs);
    }
    if let Some(v) = obj.get("output_dir") {
        check::<PathBuf>("output_dir", v, &mut errs);
    }
    if let Some(v) = obj.get("seed") {
        check::<u64>("seed", v, &mut errs);
    }
    if let Some(v) = obj.get("params") {
        if let Some(o) = as_object("params", v, &mut errs) {
            check_keys("params", o, PARAM_KEYS, &[], &mut errs);
            check::<ScenarioParams>("params", &strip(v, PARAM_KEYS), &mut errs);
        }
    }

    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let cfg: ScenarioConfig = serde_json::from_value(root).map_err(|e| Error::Config(vec![e.to_string()]))?;
    semantic_errors(&cfg, &mut errs);
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(errs))
    }
}

/// Copy of an object without keys already reported as unknown.
fn strip(v: &Value, allowed: &[&str]) -> Value {
    match v.as_object() {
        Some(o) => Value::Object(o.iter().filter(|(k, _)| allowed.contains(&k.as_str())).map(|(k, x)| (k.clone(), x.clone())).collect()),
        None => v.clone(),
    }
}

fn semantic_errors(cfg: &ScenarioConfig, errs: &mut Vec<String>) {
    if let Err(Error::Config(e)) = cfg.evolution.validate() {
        errs.extend(e.into_iter().map(|m| format!("evolution: {m}")));
    }
    let n = cfg.n_qubits();
    let check_pauli = |path: String, s: &str, errs: &mut Vec<String>| {
        if s.is_empty() || !s.chars().all(|c| "IXYZixyz".contains(c)) {
            errs.push(format!("{path}: malformed Pauli string \"{s}\""));
        } else if s.len() != n {
            errs.push(format!("{path}: \"{s}\" acts on {} qubits, expected {n}", s.len()));
        }
    };
    for (i, t) in cfg.hamiltonian.iter().enumerate() {
        check_pauli(format!("hamiltonian[{i}].pauli"), &t.pauli, errs);
        if !t.coeff.is_finite() {
            errs.push(format!("hamiltonian[{i}].coeff: must be finite"));
        }
    }
    for (i, c) in cfg.channels.iter().enumerate() {
        check_pauli(format!("channels[{i}].pauli"), &c.pauli, errs);
        if !c.weight.is_finite() {
            errs.push(format!("channels[{i}].weight: must be finite"));
        }
        if let Err(e) = c.bath() {
            errs.push(format!("channels[{i}]: {e}"));
        }
        if let FilterMode::FiniteWindow(t) = c.filter {
            if !(t.is_finite() && t >= 0.0) {
                errs.push(format!("channels[{i}].filter: window length must be >= 0"));
            }
        }
    }
    if n > 10 {
        errs.push(format!("{n} qubits exceeds the dense limit of 10"));
    }
    if let Some(s) = &cfg.initial_state {
        if s.len() != n || !s.chars().all(|c| "01+-".contains(c)) {
            errs.push(format!("initial_state: \"{s}\" must have one of 0 1 + - per qubit ({n})"));
        }
    }
    if cfg.scenario.needs_system() {
        if cfg.hamiltonian.is_empty() {
            errs.push(format!("scenario {} requires a hamiltonian", cfg.scenario.name()));
        }
        if cfg.channels.is_empty() {
            errs.push(format!("scenario {} requires at least one channel", cfg.scenario.name()));
        }
    }
    let p = &cfg.params;
    if p.n_traj < 2 {
        errs.push("params.n_traj: must be >= 2".into());
    }
    if cfg.scenario == Scenario::UnravelCheck && p.record_times.iter().any(|t| !(t.is_finite() && *t >= 0.0 && *t <= cfg.evolution.horizon))
    {
        errs.push("params.record_times: must lie in [0, horizon]".into());
    }
    let (lo, hi, k) = p.sweep;
    if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi >= lo && k >= 1) {
        errs.push(format!("params.sweep: invalid grid ({lo}, {hi}, {k})"));
    }
    if !(crate::bench::MIN_SPINS..=crate::bench::MAX_SPINS).contains(&p.n_spins) {
        errs.push(format!("params.n_spins: must lie in [{}, {}]", crate::bench::MIN_SPINS, crate::bench::MAX_SPINS));
    }
    if !(p.forced_t_b.is_finite() && p.forced_t_b > 0.0) {
        errs.push("params.forced_t_b: must be > 0".into());
    }
    if p.epsilons.is_empty() || p.epsilons.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        errs.push("params.epsilons: must be non-empty and positive".into());
    }
}
