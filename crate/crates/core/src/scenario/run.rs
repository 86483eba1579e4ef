use std::time::Instant;

use serde_json::{json, Value};

use crate::bench::{build_bath, exact_evolve, powder_scenario, PowderParams, PowderReport};
use crate::error::Result;
use crate::filter::{filtered, CouplingChannel, SpectralDecomposition};
use crate::fixed_point::{correction_mismatch, fixed_point_report, gibbs_state, stationarity_residual};
use crate::linalg::{self, frobenius, max_abs, operator_norm, DenseOperator, C64};
use crate::master::budget::error_budget;
use crate::master::evolve::{evolve, relaxation_time, EvolutionConfig, Trajectory, Variant};
use crate::master::generator::DaviesGenerator;
use crate::positivity::sweep_tprime;
use crate::unravel::{estimate_observable, jump_operators, jump_operators_multi, run_ensemble, JumpSet};

use super::config::ScenarioConfig;
use super::output::{write_all, Cell, CsvTable, FileEntry, Manifest};
use super::Scenario;

/// Tables and summary of one scenario, before anything touches the disk.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub tables: Vec<CsvTable>,
    pub summary: Value,
}

struct System {
    h: DenseOperator,
    channels: Vec<CouplingChannel>,
    rho0: DenseOperator,
    beta: f64,
}

fn system(cfg: &ScenarioConfig) -> Result<System> {
    let channels = cfg.coupling_channels()?;
    let beta = channels.first().map_or(1.0, |c| c.bath.beta);
    Ok(System { h: cfg.hamiltonian_matrix()?, channels, rho0: cfg.initial_density()?, beta })
}

fn with_variant(cfg: &EvolutionConfig, variant: Variant) -> EvolutionConfig {
    EvolutionConfig { variant, ..cfg.clone() }
}

fn rho11(tr: &Trajectory) -> Vec<f64> {
    tr.element(0, 0).iter().map(|z| z.re).collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn comparison_table(quantity: &str, names: [&str; 2], times: &[f64], a: &[f64], b: &[f64]) -> CsvTable {
    let mut t = CsvTable::new(quantity, &[names[0], names[1], "difference"]);
    for ((&s, &x), &y) in times.iter().zip(a).zip(b) {
        t.push(s, [x, y, x - y]);
    }
    t
}

fn single_qubit_relax(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let s = system(cfg)?;
    let tr = evolve(&cfg.evolution, &s.h, &s.channels, &s.rho0)?;
    let gibbs = gibbs_state(&s.h, s.beta)?;
    let mut t11 = CsvTable::new("rho11", &["rho11"]);
    let mut t12 = CsvTable::new("rho12", &["re", "im"]);
    let mut tg = CsvTable::new("gibbs_deviation", &["max_abs"]);
    for (t, rho) in tr.times.iter().zip(&tr.states) {
        t11.push(*t, [rho[(0, 0)].re]);
        t12.push(*t, [rho[(0, 1)].re, rho[(0, 1)].im]);
        tg.push(*t, [max_abs(&(rho - &gibbs))]);
    }
    let p = rho11(&tr);
    let last = *p.last().unwrap_or(&f64::NAN);
    let spec = SpectralDecomposition::new(&s.h)?;
    let norms: Vec<f64> = s.channels.iter().map(|c| filtered(c, &spec).map(|af| frobenius(&af))).collect::<Result<_>>()?;
    let summary = json!({
        "final_rho11": last,
        "gibbs_rho11": gibbs[(0, 0)].re,
        "final_gibbs_deviation": max_abs(&(tr.last() - &gibbs)),
        "relaxation_time": relaxation_time(&tr.times, &p, last),
        "filtered_norms": norms,
    });
    Ok(RunOutput { tables: vec![t11, t12, tg], summary })
}

fn davies_compare(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let s = system(cfg)?;
    let local = evolve(&cfg.evolution, &s.h, &s.channels, &s.rho0)?;
    let davies = evolve(&with_variant(&cfg.evolution, Variant::Davies), &s.h, &s.channels, &s.rho0)?;
    let (a, b) = (rho11(&local), rho11(&davies));
    let gen = DaviesGenerator::new(&s.h, &s.channels)?;
    let gibbs = gibbs_state(&s.h, s.beta)?;
    let summary = json!({
        "variant": cfg.evolution.variant,
        "max_rho11_difference": max_diff(&a, &b),
        "davies_gibbs_residual": stationarity_residual(&gibbs, &gen),
    });
    Ok(RunOutput { tables: vec![comparison_table("rho11", ["local_me", "davies"], &local.times, &a, &b)], summary })
}

fn integral_compare(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let s = system(cfg)?;
    let markov_variant = if cfg.evolution.variant == Variant::Integral { Variant::LocalMe } else { cfg.evolution.variant };
    let local = evolve(&with_variant(&cfg.evolution, markov_variant), &s.h, &s.channels, &s.rho0)?;
    let integral = evolve(&with_variant(&cfg.evolution, Variant::Integral), &s.h, &s.channels, &s.rho0)?;
    let (a, b) = (rho11(&local), rho11(&integral));
    let summary = json!({
        "markov_variant": markov_variant,
        "max_rho11_difference": max_diff(&a, &b),
        "final_state_difference": max_abs(&(local.last() - integral.last())),
    });
    Ok(RunOutput { tables: vec![comparison_table("rho11", ["local_me", "integral"], &local.times, &a, &b)], summary })
}

fn positivity_sweep(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let s = system(cfg)?;
    let (lo, hi, k) = cfg.params.sweep;
    let ev = &cfg.evolution;
    let res = sweep_tprime(&s.h, &s.channels[0], ev.dt, (lo, hi), k, ev.avg_points)?;
    let m = res.reports.iter().map(|r| r.by_magnitude.len()).max().unwrap_or(0);
    let mut names: Vec<String> = (1..=m).map(|i| format!("lambda_{i}")).collect();
    names.push("most_negative".into());
    names.push("rank_of_most_negative".into());
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut table = CsvTable::new("eigenvalues", &refs);
    let mut warnings = Vec::new();
    for r in &res.reports {
        let mut row: Vec<f64> = (0..m).map(|i| r.by_magnitude.get(i).copied().unwrap_or(f64::NAN)).collect();
        row.push(r.most_negative().unwrap_or(0.0));
        row.push(r.rank_of_most_negative.map_or(0.0, |k| k as f64));
        table.push(r.t_prime, row);
        warnings.extend(r.warnings.iter().map(|w| format!("T' = {}: {w}", r.t_prime)));
    }
    if s.channels.len() > 1 {
        warnings.push("only the first channel enters the sweep".into());
    }
    let summary = json!({
        "threshold": res.threshold,
        "resolution": res.resolution,
        "warnings": warnings,
    });
    Ok(RunOutput { tables: vec![table], summary })
}

fn unravel_check(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let s = system(cfg)?;
    let ev = &cfg.evolution;
    let p = &cfg.params;
    let jumps: JumpSet = if s.channels.len() == 1 {
        jump_operators(&s.h, &s.channels[0], ev.dt, ev.t_prime, ev.avg_points, p.negativity_tol)?
    } else {
        jump_operators_multi(&s.h, &s.channels, ev.dt, ev.t_prime, ev.avg_points, p.negativity_tol)?
    };
    let steps: Vec<usize> = p.record_times.iter().map(|t| (t / ev.dt).round() as usize).collect();
    let max_step = steps.iter().copied().max().unwrap_or(0);
    let psi0 = cfg.initial_vector()?;
    let ensemble = run_ensemble(&jumps, &psi0, &steps, p.n_traj, cfg.seed, p.sampling)?;

    let mut ref_cfg = with_variant(ev, Variant::LocalMe);
    ref_cfg.record_every = 1;
    ref_cfg.horizon = (max_step as f64 * ev.dt).max(ev.dt);
    let reference = evolve(&ref_cfg, &s.h, &s.channels, &s.rho0)?;

    let mut map_states = vec![s.rho0.clone()];
    for _ in 0..max_step {
        let next = jumps.apply(map_states.last().expect("non-empty"));
        map_states.push(next);
    }

    let dim = s.h.nrows();
    let mut proj = linalg::zeros(dim);
    proj[(0, 0)] = C64::new(1.0, 0.0);
    let mut table = CsvTable::new("rho11", &["trajectories", "stderr", "density_matrix", "step_map", "z_score"]);
    let mut worst_z: f64 = 0.0;
    for (r, &step) in steps.iter().enumerate() {
        let est = estimate_observable(&ensemble, r, &proj)?;
        let dm = reference.states[step][(0, 0)].re;
        let map = map_states[step][(0, 0)].re;
        let z = (est.mean - dm) / est.stderr;
        worst_z = worst_z.max(z.abs());
        table.push(step as f64 * ev.dt, [est.mean, est.stderr, dm, map, z]);
    }
    let completeness = max_abs(&(jumps.completeness() - linalg::identity(dim)));
    let summary = json!({
        "n_traj": p.n_traj,
        "seed": cfg.seed,
        "n_jump_operators": jumps.ops.len(),
        "completeness_deviation": completeness,
        "completeness_bound": 10.0 * ev.dt * ev.dt,
        "dropped_negative_mass": jumps.dropped_negative_mass,
        "max_abs_z_score": worst_z,
    });
    Ok(RunOutput { tables: vec![table], summary })
}

fn powder_json(r: &PowderReport) -> Value {
    serde_json::to_value(r).unwrap_or(Value::Null)
}

fn powder_of_sympathy(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let ev = &cfg.evolution;
    let base = PowderParams {
        t_b: None,
        horizon: ev.horizon,
        dt: ev.dt,
        t_prime: ev.t_prime,
        record_every: ev.record_every,
        ..Default::default()
    };
    let default = powder_scenario(&base)?;
    let forced = powder_scenario(&PowderParams { t_b: Some(cfg.params.forced_t_b), ..base })?;
    let mut tables = Vec::new();
    for (name, r) in [("populations", &default), ("forced_populations", &forced)] {
        if r.failure.is_none() {
            let mut t = CsvTable::new(name, &["spin1_excited", "spin2_excited"]);
            for ((&s, &a), &b) in r.times.iter().zip(&r.spin1).zip(&r.spin2) {
                t.push(s, [a, b]);
            }
            tables.push(t);
        }
    }
    let summary = json!({ "default": powder_json(&default), "forced": powder_json(&forced) });
    Ok(RunOutput { tables, summary })
}

fn faithful_bench(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let s = system(cfg)?;
    let ch = &s.channels[0];
    let ev = &cfg.evolution;
    let bath = build_bath(&ch.bath, cfg.params.n_spins)?;
    let sample = ev.dt * ev.record_every as f64;
    let exact = exact_evolve(&s.h, &ch.op, &bath, 1.0, &s.rho0, ev.horizon, sample)?;
    let local = evolve(ev, &s.h, std::slice::from_ref(ch), &s.rho0)?;
    let n = exact.times.len().min(local.times.len());
    let (a, b) = (rho11(&exact), rho11(&local));
    let rho = comparison_table("rho11", ["exact", "local_me"], &exact.times[..n], &a[..n], &b[..n]);

    let span = 3.0 * ch.bath.decay_time();
    let mut corr = CsvTable::new("correlation", &["target_re", "target_im", "bath_re", "bath_im"]);
    for k in 0..=200 {
        let t = -span + 2.0 * span * k as f64 / 200.0;
        let (c0, c1) = (ch.bath.correlation(t), bath.correlation(t));
        corr.push(t, [c0.re, c0.im, c1.re, c1.im]);
    }
    let early: Vec<usize> = (0..n).filter(|&i| exact.times[i] <= 2.0 + 1e-12).collect();
    let early_diff = early.iter().map(|&i| (a[i] - b[i]).abs()).fold(0.0, f64::max);
    let summary = json!({
        "n_spins": bath.n_spins,
        "omega_max": bath.omega_max,
        "residual": bath.residual,
        "max_rho11_difference_t_le_2": early_diff,
        "max_rho11_difference": max_diff(&a[..n], &b[..n]),
    });
    Ok(RunOutput { tables: vec![rho, corr], summary })
}

fn error_tables(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let channels = cfg.coupling_channels()?;
    let (a_norm, beta) = channels.first().map_or((0.5, 1.0), |c| (operator_norm(&c.op), c.bath.beta));
    let n = cfg.n_qubits().max(1);
    let t = cfg.params.budget_time.unwrap_or(cfg.evolution.horizon);
    let b = error_budget(n, a_norm, beta, cfg.evolution.t_prime, t);
    let tables = b
        .tables
        .iter()
        .map(|tab| {
            let mut out = CsvTable::new(&tab.name, &["equation", "born", "other"]);
            for row in &tab.rows {
                out.push(t, [Cell::from(row.equation.as_str()), Cell::Num(row.born), Cell::Num(row.other)]);
            }
            out
        })
        .collect();
    let normalizations: Vec<(&str, &str)> = b.tables.iter().map(|t| (t.name.as_str(), t.normalization.as_str())).collect();
    let summary = json!({
        "n_qubits": n,
        "a_norm": a_norm,
        "beta": beta,
        "t": t,
        "filtered_norm_bound": b.filtered_norm_bound,
        "eps_average": b.eps_average,
        "eps_markov": b.eps_markov,
        "born_proxy": b.born_proxy,
        "secular": b.secular,
        "short_time": b.short_time,
        "normalizations": normalizations,
    });
    Ok(RunOutput { tables, summary })
}

fn fixed_point(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let s = system(cfg)?;
    let ev = &cfg.evolution;
    let report = fixed_point_report(&s.h, &s.channels, s.beta, ev.t_prime, ev.avg_points)?;
    let corrected = &report.gibbs + &report.delta_rho_offdiag + &report.delta_rho_diag;
    let tr = evolve(ev, &s.h, &s.channels, &s.rho0)?;
    let mut table = CsvTable::new("deviation", &["from_gibbs", "from_corrected"]);
    for (t, rho) in tr.times.iter().zip(&tr.states) {
        table.push(*t, [max_abs(&(rho - &report.gibbs)), max_abs(&(rho - &corrected))]);
    }
    let ch = &s.channels[0];
    let mismatches: Vec<f64> = cfg
        .params
        .epsilons
        .iter()
        .map(|&e| correction_mismatch(&s.h, &CouplingChannel::new(&ch.op * C64::new(e, 0.0), ch.bath, ch.mode)?, s.beta))
        .collect::<Result<_>>()?;
    let summary = json!({
        "residuals": report.residuals,
        "warnings": report.warnings,
        "epsilons": cfg.params.epsilons,
        "correction_mismatch": mismatches,
        "mismatch_ratios": mismatches.windows(2).map(|w| w[0] / w[1]).collect::<Vec<_>>(),
    });
    Ok(RunOutput { tables: vec![table], summary })
}

/// Runs a scenario without writing anything.
pub fn run_in_memory(cfg: &ScenarioConfig) -> Result<RunOutput> {
    cfg.validate()?;
    match cfg.scenario {
        Scenario::SingleQubitRelax => single_qubit_relax(cfg),
        Scenario::DaviesCompare => davies_compare(cfg),
        Scenario::IntegralCompare => integral_compare(cfg),
        Scenario::PositivitySweep => positivity_sweep(cfg),
        Scenario::UnravelCheck => unravel_check(cfg),
        Scenario::PowderOfSympathy => powder_of_sympathy(cfg),
        Scenario::FaithfulBench => faithful_bench(cfg),
        Scenario::ErrorTables => error_tables(cfg),
        Scenario::FixedPointReport => fixed_point(cfg),
    }
}

/// Runs a scenario and writes its CSVs and `manifest.json` into
/// `cfg.output_dir`. A failed run still writes the manifest.
pub fn run(cfg: &ScenarioConfig) -> Result<Manifest> {
    let start = Instant::now();
    let result = run_in_memory(cfg);
    let wall_time_s = start.elapsed().as_secs_f64();
    let name = cfg.scenario.name();
    let mut manifest = Manifest {
        scenario: name.into(),
        schema_version: cfg.schema_version,
        version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        status: "ok".into(),
        error: None,
        wall_time_s,
        files: Vec::new(),
        summary: Value::Null,
        config: serde_json::to_value(cfg)?,
    };
    match result {
        Ok(out) => {
            manifest.files =
                out.tables.iter().map(|t| FileEntry { name: t.file_name(name), columns: t.header.clone(), rows: t.rows.len() }).collect();
            manifest.summary = out.summary;
            write_all(&cfg.output_dir, name, &out.tables, &manifest)?;
            Ok(manifest)
        }
        Err(e) => {
            manifest.status = "failed".into();
            manifest.error = Some(e.to_string());
            write_all(&cfg.output_dir, name, &[], &manifest)?;
            Err(e)
        }
    }
}
