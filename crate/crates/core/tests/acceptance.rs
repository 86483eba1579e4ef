//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Exits nonzero when a criterion fails that is not listed in `KNOWN_GAPS`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lme_core::bath::BathSpec;
use lme_core::bench::{build_bath, exact_evolve, powder_scenario, PowderParams};
use lme_core::filter::{filtered, heisenberg, CouplingChannel, FilterMode, SpectralDecomposition};
use lme_core::fixed_point::{correction_mismatch, gibbs_state, reduced_gibbs, stationarity_residual};
use lme_core::linalg::{self, kron, max_abs, partial_trace, pauli, vectorize, DenseOperator, C64};
use lme_core::master::evolve::relaxation_time;
use lme_core::master::{evolve, DaviesGenerator, EvolutionConfig, Variant};
use lme_core::positivity::{sweep_tprime, DEFAULT_SWEEP};
use lme_core::scenario::{parse_config, run};
use lme_core::special::dawson;
use lme_core::unravel::{estimate_observable, jump_operators, run_ensemble, SamplingRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GIBBS_TOL: f64 = 1e-6;
const GIBBS_SECONDS: f64 = 10.0;
const DECAY_TARGET: f64 = 2.9;
const DECAY_REL: f64 = 0.30;
const AF_NORM_TARGET: f64 = 0.69;
const AF_NORM_TOL: f64 = 0.03;
const THRESHOLD_TARGET: f64 = 0.30;
const THRESHOLD_TOL_1Q: f64 = 0.05;
const THRESHOLD_TOL_2Q: f64 = 0.10;
const SWEEP_SECONDS: f64 = 60.0;
const DAVIES_RESIDUAL: f64 = 1e-12;
const DAVIES_WINDOW: (f64, f64) = (0.01, 0.3);
const KMS_TOL: f64 = 1e-12;
const KMS_SAMPLES: usize = 200;
const QUADRATURE_TOL: f64 = 1e-6;
const DZERO_TOL: f64 = 1e-6;
const ORACLE_TOL: f64 = 1e-12;
const MISMATCH_RATIO: f64 = 8.0;
const GIBBS_EXPONENT: (f64, f64) = (2.0, 0.2);
const N_TRAJ: usize = 4000;
const STDERR_FACTOR: f64 = 3.0;
const UNRAVEL_SECONDS: f64 = 120.0;
const BATH_RESIDUAL: f64 = 0.1;
const BENCH_WINDOW: f64 = 2.0;
const BENCH_TOL: f64 = 0.1;
const SURVIVAL_TOL: f64 = 1e-6;
const SPIN2_WINDOW: (f64, f64) = (33.0, 300.0);

/// Failures that are documented and expected.
const KNOWN_GAPS: &[&str] = &["9w"];

struct Suite {
    failed: Vec<String>,
}

impl Suite {
    fn check(&mut self, id: &str, name: &str, ok: bool, detail: String) {
        let tag = if ok { "PASS" } else { "FAIL" };
        let known = if !ok && KNOWN_GAPS.contains(&id) { " [known gap]" } else { "" };
        println!("{tag} {id:>3} {name}: {detail}{known}");
        if !ok && known.is_empty() {
            self.failed.push(id.to_string());
        }
    }
}

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn qubit() -> DenseOperator {
    pauli::z() * c(0.5) + pauli::x()
}

fn coupling() -> DenseOperator {
    pauli::z() * c(0.5)
}

fn channel(mode: FilterMode) -> CouplingChannel {
    CouplingChannel::new(coupling(), BathSpec::with_defaults(1.0).unwrap(), mode).unwrap()
}

fn plus() -> DenseOperator {
    DenseOperator::from_element(2, 2, c(0.5))
}

fn rho11(states: &[DenseOperator]) -> Vec<f64> {
    states.iter().map(|r| r[(0, 0)].re).collect()
}

fn two_qubit() -> (DenseOperator, DenseOperator) {
    let s = |p: &str| pauli::string(p).unwrap();
    let h = s("ZI") * c(0.5) - s("IZ") * c(0.7) + s("ZZ") * c(0.3) + s("XI") + s("IX");
    (h, s("ZI") * c(0.5))
}

fn criterion_1_2(suite: &mut Suite) {
    let start = Instant::now();
    let cfg = EvolutionConfig { record_every: 10, ..EvolutionConfig::new(Variant::LocalMe, 100.0) };
    let ch = channel(FilterMode::FullLine);
    let tr = evolve(&cfg, &qubit(), std::slice::from_ref(&ch), &plus()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let gibbs = gibbs_state(&qubit(), 1.0).unwrap();
    let dev = max_abs(&(tr.last() - &gibbs));
    suite.check(
        "1",
        "Gibbs fixed point at T = 100",
        dev <= GIBBS_TOL && secs < GIBBS_SECONDS,
        format!("max |rho - gibbs| = {dev:.3e} (<= {GIBBS_TOL:e}), {secs:.2} s (< {GIBBS_SECONDS} s)"),
    );

    let p = rho11(&tr.states);
    let tau = relaxation_time(&tr.times, &p, gibbs[(0, 0)].re).unwrap_or(f64::NAN);
    let af = filtered(&ch, &SpectralDecomposition::new(&qubit()).unwrap()).unwrap();
    let norm = linalg::frobenius(&af);
    let ok = (tau - DECAY_TARGET).abs() <= DECAY_REL * DECAY_TARGET && (norm - AF_NORM_TARGET).abs() <= AF_NORM_TOL;
    suite.check(
        "2",
        "decay time and filtered norm",
        ok,
        format!(
            "1/e time {tau:.3} (target {DECAY_TARGET} +/- {:.0}%), sqrt Tr(Af Af^+) = {norm:.4} ({AF_NORM_TARGET} +/- {AF_NORM_TOL})",
            DECAY_REL * 100.0
        ),
    );
}

fn criterion_3(suite: &mut Suite) {
    let start = Instant::now();
    let (lo, hi, k) = DEFAULT_SWEEP;
    let one = sweep_tprime(&qubit(), &channel(FilterMode::FullLine), 0.01, (lo, hi), k, 3).unwrap();
    let (h2, a2) = two_qubit();
    let ch2 = CouplingChannel::new(a2, BathSpec::with_defaults(1.0).unwrap(), FilterMode::FullLine).unwrap();
    let two = sweep_tprime(&h2, &ch2, 0.01, (lo, hi), k, 3).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let t1 = one.threshold.unwrap_or(f64::NAN);
    let t2 = two.threshold.unwrap_or(f64::NAN);
    let ok = (t1 - THRESHOLD_TARGET).abs() <= THRESHOLD_TOL_1Q + 1e-9
        && (t2 - THRESHOLD_TARGET).abs() <= THRESHOLD_TOL_2Q + 1e-9
        && secs < SWEEP_SECONDS;
    suite.check(
        "3",
        "positivity threshold",
        ok,
        format!("single qubit T' = {t1:.2} ({THRESHOLD_TARGET} +/- {THRESHOLD_TOL_1Q}), two qubit T' = {t2:.2} (+/- {THRESHOLD_TOL_2Q}), {secs:.2} s"),
    );
}

fn criterion_4(suite: &mut Suite) {
    let ch = channel(FilterMode::FullLine);
    let gen = DaviesGenerator::new(&qubit(), std::slice::from_ref(&ch)).unwrap();
    let residual = stationarity_residual(&gibbs_state(&qubit(), 1.0).unwrap(), &gen);
    let cfg = EvolutionConfig::new(Variant::LocalMe, 20.0);
    let local = evolve(&cfg, &qubit(), std::slice::from_ref(&ch), &plus()).unwrap();
    let davies = evolve(&EvolutionConfig { variant: Variant::Davies, ..cfg }, &qubit(), &[ch], &plus()).unwrap();
    let dev = rho11(&local.states).iter().zip(rho11(&davies.states)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    suite.check(
        "4",
        "Davies consistency",
        residual <= DAVIES_RESIDUAL && dev >= DAVIES_WINDOW.0 && dev <= DAVIES_WINDOW.1,
        format!(
            "||L_D(gibbs)|| = {residual:.3e} (<= {DAVIES_RESIDUAL:e}), max |rho11 diff| = {dev:.4} in [{}, {}]",
            DAVIES_WINDOW.0, DAVIES_WINDOW.1
        ),
    );
}

/// Composite Simpson on `[a, b]` with `n` (even) panels.
fn simpson<F: Fn(f64) -> DenseOperator>(f: F, a: f64, b: f64, n: usize) -> DenseOperator {
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += f(a + k as f64 * h) * c(w);
    }
    acc * c(h / 3.0)
}

fn criterion_5(suite: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let bath = BathSpec::with_defaults(1.0).unwrap();
    let mut kms: f64 = 0.0;
    for _ in 0..KMS_SAMPLES {
        let w: f64 = rng.gen_range(-8.0..8.0);
        let lhs = bath.spectral_density(w);
        let rhs = (-bath.beta * w).exp() * bath.spectral_density(-w);
        kms = kms.max((lhs - rhs).abs() / lhs.max(rhs));
    }

    // A^f as a time integral of C(tau) e^{-iH tau} A e^{iH tau}
    let spec = SpectralDecomposition::new(&qubit()).unwrap();
    let heis = |tau: f64| heisenberg(&coupling(), &qubit(), -tau);
    let span = bath.cutoff_time(1e-18);
    let half = simpson(|t| heis(t) * bath.correlation(t), 0.0, span, 4000);
    let full = simpson(|t| heis(t) * bath.correlation(t), -span, span, 8000);
    let q_half = max_abs(&(filtered(&channel(FilterMode::HalfLine), &spec).unwrap() - half));
    let q_full = max_abs(&(filtered(&channel(FilterMode::FullLine), &spec).unwrap() - full));

    // D(0) against the closed form -2 sqrt(pi) N e^{a^2} F(a), a = beta / 4 t_b
    let a = bath.beta / (4.0 * bath.t_b);
    let closed = -2.0 * PI.sqrt() * bath.norm * (a * a).exp() * dawson(a);
    let dz = (bath.d_zero().unwrap() - closed).abs();

    // vec(A B C) = (A (x) C^T) vec(B) in row-major order; tr_2(X (x) Y) = X tr Y
    let mut oracle: f64 = 0.0;
    let mut random = |n: usize| DenseOperator::from_fn(n, n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    for n in [2usize, 3, 4] {
        let (x, b, y) = (random(n), random(n), random(n));
        oracle = oracle
            .max((vectorize(&(&x * &b * &y)) - kron(&x, &y.transpose()) * vectorize(&b)).iter().map(|z| z.norm()).fold(0.0, f64::max));
        let z = random(2);
        let pt = partial_trace(&kron(&x, &z), &[n, 2], &[0]).unwrap();
        oracle = oracle.max(max_abs(&(pt - &x * linalg::trace(&z))));
        let pt = partial_trace(&kron(&z, &x), &[2, n], &[1]).unwrap();
        oracle = oracle.max(max_abs(&(pt - &x * linalg::trace(&z))));
    }

    let ok = kms <= KMS_TOL && q_half <= QUADRATURE_TOL && q_full <= QUADRATURE_TOL && dz <= DZERO_TOL && oracle <= ORACLE_TOL;
    suite.check(
        "5",
        "KMS and oracle suite",
        ok,
        format!("KMS rel {kms:.2e} over {KMS_SAMPLES} w, Af quadrature half {q_half:.2e} full {q_full:.2e}, D(0) {dz:.2e}, vec/ptrace {oracle:.2e}"),
    );
}

fn criterion_6(suite: &mut Suite) {
    let bath = BathSpec::with_defaults(1.0).unwrap();
    let m: Vec<f64> = [1.0, 0.5, 0.25]
        .iter()
        .map(|&e| {
            let ch = CouplingChannel::new(coupling() * c(e), bath, FilterMode::HalfLine).unwrap();
            correction_mismatch(&qubit(), &ch, 1.0).unwrap()
        })
        .collect();
    let ratios: Vec<f64> = m.windows(2).map(|w| w[0] / w[1]).collect();

    let s = |p: &str| pauli::string(p).unwrap();
    let hb = s("ZI") * c(0.6) + s("IZ") * c(1.3);
    let b = s("XI") + s("IX") * c(0.7);
    let g0 = gibbs_state(&qubit(), 1.0).unwrap();
    let gs = [0.025, 0.05, 0.1, 0.2];
    let pts: Vec<(f64, f64)> = gs
        .iter()
        .map(|&g| {
            let d = max_abs(&(reduced_gibbs(&qubit(), &coupling(), &hb, &b, g, 1.0).unwrap() - &g0));
            (g.ln(), d.ln())
        })
        .collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();

    let ok = ratios.iter().all(|&r| r >= MISMATCH_RATIO) && (slope - GIBBS_EXPONENT.0).abs() <= GIBBS_EXPONENT.1;
    suite.check(
        "6",
        "fixed-point equivalence",
        ok,
        format!(
            "mismatch {:?}, ratios {ratios:.2?} (>= {MISMATCH_RATIO}), reduced Gibbs exponent {slope:.3} ({} +/- {})",
            m.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>(),
            GIBBS_EXPONENT.0,
            GIBBS_EXPONENT.1
        ),
    );
}

fn criterion_7(suite: &mut Suite) {
    let start = Instant::now();
    let dt = 0.01;
    let ch = channel(FilterMode::FullLine);
    let jumps = jump_operators(&qubit(), &ch, dt, 0.3, 3, None).unwrap();
    let completeness = max_abs(&(jumps.completeness() - linalg::identity(2)));
    let times = [1.0, 5.0, 20.0];
    let steps: Vec<usize> = times.iter().map(|t: &f64| (t / dt).round() as usize).collect();
    let psi0 = linalg::OperatorVector::from_element(2, c(std::f64::consts::FRAC_1_SQRT_2));
    let ens = run_ensemble(&jumps, &psi0, &steps, N_TRAJ, 20240611, SamplingRule::NormWeighted).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let tr = evolve(&EvolutionConfig::new(Variant::LocalMe, 20.0), &qubit(), &[ch], &plus()).unwrap();
    let mut proj = linalg::zeros(2);
    proj[(0, 0)] = c(1.0);
    let mut ok = completeness <= 10.0 * dt * dt && secs < UNRAVEL_SECONDS;
    let mut detail = Vec::new();
    for (r, &s) in steps.iter().enumerate() {
        let est = estimate_observable(&ens, r, &proj).unwrap();
        let dm = tr.states[s][(0, 0)].re;
        let z = (est.mean - dm) / est.stderr;
        ok &= z.abs() <= STDERR_FACTOR;
        detail.push(format!("t={}: {:.4}+/-{:.4} vs {dm:.4} (z {z:+.2})", times[r], est.mean, est.stderr));
    }
    suite.check(
        "7",
        "unraveling equivalence",
        ok,
        format!("{}; sum C^+C - I = {completeness:.2e} (<= {:.0e}), {secs:.2} s", detail.join(", "), 10.0 * dt * dt),
    );
}

fn criterion_8(suite: &mut Suite) {
    let ch = channel(FilterMode::HalfLine);
    let bath = build_bath(&ch.bath, 8).unwrap();
    let dt = 0.05;
    let exact = exact_evolve(&qubit(), &coupling(), &bath, 1.0, &plus(), 6.0, dt).unwrap();
    let cfg = EvolutionConfig { record_every: 5, ..EvolutionConfig::new(Variant::LocalMe, 6.0) };
    let local = evolve(&cfg, &qubit(), &[ch], &plus()).unwrap();
    let dev = exact
        .times
        .iter()
        .zip(exact.states.iter().zip(&local.states))
        .filter(|(t, _)| **t <= BENCH_WINDOW + 1e-12)
        .map(|(_, (a, b))| (a[(0, 0)].re - b[(0, 0)].re).abs())
        .fold(0.0, f64::max);
    suite.check(
        "8",
        "faithful bench",
        bath.residual <= BATH_RESIDUAL && dev <= BENCH_TOL,
        format!(
            "8-spin bath residual {:.4} (<= {BATH_RESIDUAL}), max |rho11 exact - local| for t <= {BENCH_WINDOW}: {dev:.4} (<= {BENCH_TOL})",
            bath.residual
        ),
    );
}

fn criterion_9(suite: &mut Suite) {
    let default = powder_scenario(&PowderParams::default()).unwrap();
    let forced = powder_scenario(&PowderParams { t_b: Some(0.005), ..Default::default() }).unwrap();
    let guard = default.failure.is_none() && default.spin1_survival >= 1.0 - SURVIVAL_TOL;
    // lost spin-1 population over the horizon, integrated when possible, else at the initial rate
    let forced_loss = if forced.failure.is_none() { 1.0 - forced.spin1_survival } else { forced.spin1_initial_rate * forced.horizon };
    let spurious = forced_loss > SURVIVAL_TOL;
    let note = forced.failure.as_deref().map(|f| format!("; forced run: {f}")).unwrap_or_default();
    suite.check(
        "9",
        "bandwidth guard",
        guard && spurious,
        format!(
            "default t_b {}: 1 - survival = {:.2e} (<= {SURVIVAL_TOL:e}); forced t_b 0.005: initial spin-1 rate {:.3e}, loss over T {:.3e} (> {SURVIVAL_TOL:e}){note}",
            default.t_b,
            1.0 - default.spin1_survival,
            forced.spin1_initial_rate,
            forced_loss
        ),
    );
    suite.check(
        "9w",
        "spin-2 T1 window (module example)",
        default.spin2_t1 >= SPIN2_WINDOW.0 && default.spin2_t1 <= SPIN2_WINDOW.1,
        format!(
            "T1 = {:.2} (Pauli rates {:.2}), window [{}, {}]",
            default.spin2_t1, default.spin2_t1_rates, SPIN2_WINDOW.0, SPIN2_WINDOW.1
        ),
    );
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| {
            let p = e.ok()?.path();
            (p.extension()? == "csv").then(|| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        })
        .collect();
    out.sort();
    out
}

fn criterion_10(suite: &mut Suite) {
    let configs = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let scratch = std::env::temp_dir().join(format!("lme-acceptance-{}", std::process::id()));
    let mut paths: Vec<PathBuf> =
        std::fs::read_dir(&configs).unwrap().map(|e| e.unwrap().path()).filter(|p| p.extension().is_some_and(|e| e == "json")).collect();
    paths.sort();
    let mut mismatched = Vec::new();
    let mut n_files = 0;
    let start = Instant::now();
    for p in &paths {
        let stem = p.file_stem().unwrap().to_string_lossy().into_owned();
        let mut cfg = parse_config(&std::fs::read_to_string(p).unwrap()).unwrap();
        let mut outputs = Vec::new();
        for rep in 0..2 {
            cfg.output_dir = scratch.join(format!("{stem}-{rep}"));
            match run(&cfg) {
                Ok(_) => outputs.push(csv_files(&cfg.output_dir)),
                Err(e) => mismatched.push(format!("{stem}: {e}")),
            }
        }
        if outputs.len() == 2 {
            n_files += outputs[0].len();
            if outputs[0] != outputs[1] || outputs[0].is_empty() {
                mismatched.push(stem);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let _ = std::fs::remove_dir_all(&scratch);
    suite.check(
        "10",
        "determinism",
        mismatched.is_empty(),
        format!("{} reference configs run twice, {n_files} CSVs byte-identical, {secs:.1} s; mismatches: {mismatched:?}", paths.len()),
    );
}

fn main() {
    let mut suite = Suite { failed: Vec::new() };
    criterion_1_2(&mut suite);
    criterion_3(&mut suite);
    criterion_4(&mut suite);
    criterion_5(&mut suite);
    criterion_6(&mut suite);
    criterion_7(&mut suite);
    criterion_8(&mut suite);
    criterion_9(&mut suite);
    criterion_10(&mut suite);
    if suite.failed.is_empty() {
        println!("acceptance: all criteria met or documented");
    } else {
        println!("acceptance: unexpected failures {:?}", suite.failed);
        std::process::exit(1);
    }
}
