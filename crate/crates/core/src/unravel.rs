//! Quantum-jump unraveling of the explicit step map.
//!
//! Eigenvectors `c` of `W G` with eigenvalue `lambda > 0` give jump operators
//! `C = sqrt(lambda) sum_i c_i V_i / sqrt(c^dagger G c)`, so that
//! `sum C rho C^dagger` reproduces the step map up to the dropped negative part.
//!
//! Trajectories carry unnormalized states whose squared norm is the running
//! weight; observables use the self-normalized ratio estimator.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::CouplingChannel;
use crate::linalg::{self, DenseOperator, C64};
use crate::positivity::StepMapVectors;

/// Default tolerance on the dropped negative mass, relative to `dt`.
pub const NEGATIVITY_TOL_REL: f64 = 0.02;
const NULL_NORM: f64 = 1e-14;
const UNDERFLOW: f64 = 1e-30;

pub type StateVector = DVector<C64>;

#[derive(Debug, Clone)]
pub struct JumpSet {
    pub ops: Vec<DenseOperator>,
    /// Eigenvalues `lambda`, descending.
    pub weights: Vec<f64>,
    /// Sum of `|lambda|` over the dropped negative eigenvalues.
    pub dropped_negative_mass: f64,
}

impl JumpSet {
    pub fn dim(&self) -> usize {
        self.ops.first().map_or(0, |c| c.nrows())
    }

    /// `sum C^dagger C`.
    pub fn completeness(&self) -> DenseOperator {
        self.ops.iter().fold(linalg::zeros(self.dim()), |acc, c| acc + c.adjoint() * c)
    }

    /// `sum C rho C^dagger`.
    pub fn apply(&self, rho: &DenseOperator) -> DenseOperator {
        self.ops.iter().fold(linalg::zeros(self.dim()), |acc, c| acc + c * rho * c.adjoint())
    }

    /// Concatenation of per-channel sets, each scaled by `1/sqrt(n)`.
    fn split(sets: Vec<JumpSet>) -> JumpSet {
        let n = sets.len() as f64;
        let s = C64::new(1.0 / n.sqrt(), 0.0);
        let mut pairs: Vec<(f64, DenseOperator)> = Vec::new();
        let mut dropped = 0.0;
        for set in sets {
            dropped += set.dropped_negative_mass / n;
            pairs.extend(set.weights.into_iter().map(|w| w / n).zip(set.ops.into_iter().map(|c| c * s)));
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let (weights, ops) = pairs.into_iter().unzip();
        JumpSet { ops, weights, dropped_negative_mass: dropped }
    }
}

/// Jump operators of one step for a single channel.
pub fn jump_operators(
    h: &DenseOperator,
    ch: &CouplingChannel,
    dt: f64,
    t_prime: f64,
    avg_points: usize,
    negativity_tol: Option<f64>,
) -> Result<JumpSet> {
    let vecs = StepMapVectors::new(h, ch, dt, t_prime, avg_points)?;
    from_step(&vecs, negativity_tol.unwrap_or(NEGATIVITY_TOL_REL * dt))
}

/// Jump operators for several channels by splitting the identity: every
/// channel runs a step with `n` times its dissipator and the union is
/// weighted by `1/n`. Requires `n ||A Af|| dt < 0.1` for every channel.
pub fn jump_operators_multi(
    h: &DenseOperator,
    channels: &[CouplingChannel],
    dt: f64,
    t_prime: f64,
    avg_points: usize,
    negativity_tol: Option<f64>,
) -> Result<JumpSet> {
    if channels.is_empty() {
        let u = linalg::expm(&(h * C64::new(0.0, -dt)));
        return Ok(JumpSet { ops: vec![u], weights: vec![h.nrows() as f64], dropped_negative_mass: 0.0 });
    }
    if channels.len() == 1 {
        return jump_operators(h, &channels[0], dt, t_prime, avg_points, negativity_tol);
    }
    let n = channels.len() as f64;
    let tol = negativity_tol.unwrap_or(NEGATIVITY_TOL_REL * dt);
    let mut sets = Vec::new();
    for ch in channels {
        let vecs = StepMapVectors::scaled(h, ch, dt, t_prime, avg_points, n)?;
        let strength =
            linalg::operator_norm(&vecs.pairs.iter().fold(linalg::zeros(h.nrows()), |acc, (a, af)| acc + a * af)) * vecs.pair_weight;
        if strength >= 0.1 {
            return Err(Error::InvalidParameter(format!(
                "dt = {dt} too large for {} channels (n ||A Af|| dt = {strength:.3})",
                channels.len()
            )));
        }
        sets.push(from_step(&vecs, n * tol)?);
    }
    Ok(JumpSet::split(sets))
}

fn from_step(vecs: &StepMapVectors, tol: f64) -> Result<JumpSet> {
    let (values, coeffs, g, _) = vecs.duality_eigen()?;
    let basis = vecs.vectors();
    let mut kept: Vec<(f64, DenseOperator)> = Vec::new();
    let mut dropped = 0.0;
    for (k, lam) in values.iter().enumerate() {
        let c = coeffs.column(k);
        let norm2 = (c.adjoint() * &g * c)[(0, 0)].re;
        if norm2 < NULL_NORM {
            continue;
        }
        if lam.re <= 0.0 {
            dropped += -lam.re;
            continue;
        }
        let mut op = linalg::zeros(vecs.v.nrows());
        for (ci, vi) in c.iter().zip(&basis) {
            op += vi * *ci;
        }
        kept.push((lam.re, op * C64::new((lam.re / norm2).sqrt(), 0.0)));
    }
    if dropped > tol {
        return Err(Error::InvalidParameter(format!(
            "negative mass {dropped:.3e} exceeds tolerance {tol:.3e}; increase T' (see sweep_tprime)"
        )));
    }
    kept.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (weights, ops) = kept.into_iter().unzip();
    Ok(JumpSet { ops, weights, dropped_negative_mass: dropped })
}

/// Branch selection rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingRule {
    /// Branch `mu` with probability `||C_mu psi||^2 / sum ||C psi||^2`.
    #[default]
    NormWeighted,
    /// Uniformly random branch, state rescaled by the number of branches.
    /// Unbiased, but the weight variance grows geometrically with the number
    /// of steps and trajectories may end with zero weight.
    Uniform,
}

/// One step of one trajectory; returns the chosen branch.
fn step<R: Rng>(jumps: &JumpSet, psi: &mut StateVector, rng: &mut R, rule: SamplingRule, scratch: &mut Vec<StateVector>) -> Result<usize> {
    scratch.clear();
    scratch.extend(jumps.ops.iter().map(|c| c * &*psi));
    match rule {
        SamplingRule::NormWeighted => {
            let norms: Vec<f64> = scratch.iter().map(|v| v.norm_squared()).collect();
            let total: f64 = norms.iter().sum();
            if !(total > UNDERFLOW) {
                return Err(Error::InvalidParameter("all branch norms underflowed".into()));
            }
            let mut u = rng.gen::<f64>() * total;
            let mut pick = norms.len() - 1;
            for (k, &n) in norms.iter().enumerate() {
                if u < n {
                    pick = k;
                    break;
                }
                u -= n;
            }
            let s = (total / norms[pick]).sqrt();
            *psi = &scratch[pick] * C64::new(s, 0.0);
            Ok(pick)
        }
        SamplingRule::Uniform => {
            let m = scratch.len();
            let pick = rng.gen_range(0..m);
            // a branch may annihilate the state; the trajectory then carries zero weight
            *psi = &scratch[pick] * C64::new((m as f64).sqrt(), 0.0);
            Ok(pick)
        }
    }
}

/// Final (unnormalized) state of one trajectory and its jump record.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub state: StateVector,
    /// `(step, branch)` for every step that did not take branch 0.
    pub jump_log: Vec<(usize, usize)>,
}

/// Runs `n_steps` steps from the normalized `psi0`.
pub fn sample_trajectory<R: Rng>(
    jumps: &JumpSet,
    psi0: &StateVector,
    n_steps: usize,
    rng: &mut R,
    rule: SamplingRule,
) -> Result<TrajectoryRecord> {
    check_psi(jumps, psi0)?;
    let mut psi = psi0.clone();
    let mut log = Vec::new();
    let mut scratch = Vec::with_capacity(jumps.ops.len());
    for s in 1..=n_steps {
        let b = step(jumps, &mut psi, rng, rule, &mut scratch)?;
        if b != 0 {
            log.push((s, b));
        }
    }
    Ok(TrajectoryRecord { state: psi, jump_log: log })
}

fn check_psi(jumps: &JumpSet, psi0: &StateVector) -> Result<()> {
    if psi0.len() != jumps.dim() {
        return Err(Error::Dimension(format!("state of dim {} for jumps of dim {}", psi0.len(), jumps.dim())));
    }
    if (psi0.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter(format!("initial state has norm {}", psi0.norm())));
    }
    Ok(())
}

/// Deterministic generator of trajectory `index` under `seed`.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Debug, Clone)]
pub struct TrajectoryEnsemble {
    pub seed: u64,
    pub n_traj: usize,
    pub record_steps: Vec<usize>,
    /// `states[r][i]`: unnormalized state of trajectory `i` at `record_steps[r]`.
    pub states: Vec<Vec<StateVector>>,
    pub jump_log: Vec<Vec<(usize, usize)>>,
}

/// Runs `n_traj` trajectories, recording states after every step in
/// `record_steps` (ascending). Trajectory `i` draws from stream `i` of `seed`.
pub fn run_ensemble(
    jumps: &JumpSet,
    psi0: &StateVector,
    record_steps: &[usize],
    n_traj: usize,
    seed: u64,
    rule: SamplingRule,
) -> Result<TrajectoryEnsemble> {
    check_psi(jumps, psi0)?;
    if record_steps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter("record steps must be strictly ascending".into()));
    }
    let one = |i: usize| -> Result<(Vec<StateVector>, Vec<(usize, usize)>)> {
        let mut rng = trajectory_rng(seed, i);
        let mut psi = psi0.clone();
        let mut log = Vec::new();
        let mut out = Vec::with_capacity(record_steps.len());
        let mut scratch = Vec::with_capacity(jumps.ops.len());
        let mut s = 0;
        for &r in record_steps {
            while s < r {
                s += 1;
                let b = step(jumps, &mut psi, &mut rng, rule, &mut scratch)?;
                if b != 0 {
                    log.push((s, b));
                }
            }
            out.push(psi.clone());
        }
        Ok((out, log))
    };
    #[cfg(feature = "parallel")]
    let runs: Result<Vec<_>> = {
        use rayon::prelude::*;
        (0..n_traj).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let runs: Result<Vec<_>> = (0..n_traj).map(one).collect();
    let runs = runs?;
    let mut states = vec![Vec::with_capacity(n_traj); record_steps.len()];
    let mut jump_log = Vec::with_capacity(n_traj);
    for (snap, log) in runs {
        for (r, psi) in snap.into_iter().enumerate() {
            states[r].push(psi);
        }
        jump_log.push(log);
    }
    Ok(TrajectoryEnsemble { seed, n_traj, record_steps: record_steps.to_vec(), states, jump_log })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

/// `sum <psi|O|psi> / sum <psi|psi>` at record `r`, with jackknife error.
pub fn estimate_observable(ensemble: &TrajectoryEnsemble, r: usize, obs: &DenseOperator) -> Result<Estimate> {
    let states = ensemble.states.get(r).ok_or_else(|| Error::InvalidParameter(format!("record {r} out of range")))?;
    if states.is_empty() {
        return Err(Error::InvalidParameter("empty ensemble".into()));
    }
    let x: Vec<f64> = states.iter().map(|p| (p.adjoint() * obs * p)[(0, 0)].re).collect();
    let w: Vec<f64> = states.iter().map(|p| p.norm_squared()).collect();
    Ok(ratio_jackknife(&x, &w))
}

/// Unnormalized ensemble average `sum <psi|O|psi> / n` (trace-preservation check).
pub fn raw_mean(ensemble: &TrajectoryEnsemble, r: usize, obs: &DenseOperator) -> Estimate {
    let x: Vec<f64> = ensemble.states[r].iter().map(|p| (p.adjoint() * obs * p)[(0, 0)].re).collect();
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Estimate { mean, stderr: (var / n).sqrt() }
}

fn ratio_jackknife(x: &[f64], w: &[f64]) -> Estimate {
    let n = x.len();
    let (sx, sw): (f64, f64) = (x.iter().sum(), w.iter().sum());
    let mean = sx / sw;
    if n < 2 {
        return Estimate { mean, stderr: f64::NAN };
    }
    let loo: Vec<f64> = (0..n).map(|i| (sx - x[i]) / (sw - w[i])).collect();
    let avg = loo.iter().sum::<f64>() / n as f64;
    let var = loo.iter().map(|r| (r - avg).powi(2)).sum::<f64>() * (n - 1) as f64 / n as f64;
    Estimate { mean, stderr: var.sqrt() }
}

/// Density matrix `sum |psi><psi| / sum <psi|psi>` at record `r`.
pub fn ensemble_density(ensemble: &TrajectoryEnsemble, r: usize) -> DenseOperator {
    let states = &ensemble.states[r];
    let d = states.first().map_or(0, |p| p.len());
    let mut rho = linalg::zeros(d);
    let mut w = 0.0;
    for p in states {
        rho += p * p.adjoint();
        w += p.norm_squared();
    }
    rho / C64::new(w, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::BathSpec;
    use crate::filter::FilterMode;
    use crate::linalg::{max_abs, pauli};
    use crate::positivity::StepMapVectors;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn qubit(a: f64) -> (DenseOperator, CouplingChannel) {
        let h = pauli::z() * c(0.5) + pauli::x();
        let ch = CouplingChannel::new(pauli::z() * c(a), BathSpec::with_defaults(1.0).unwrap(), FilterMode::FullLine).unwrap();
        (h, ch)
    }

    fn plus() -> StateVector {
        StateVector::from_element(2, c(0.5f64.sqrt()))
    }

    #[test]
    fn uncoupled_gives_single_unitary_jump() {
        let (h, ch) = qubit(0.0);
        let j = jump_operators(&h, &ch, 0.01, 0.3, 3, None).unwrap();
        assert_eq!(j.ops.len(), 1);
        let u = linalg::expm(&(&h * C64::new(0.0, -0.01)));
        assert!(
            max_abs(&(&j.ops[0] - &u)) < 1e-12 || max_abs(&(&j.ops[0] + &u)) < 1e-12 || {
                // global phase is arbitrary
                let ph = j.ops[0][(0, 0)] / u[(0, 0)];
                max_abs(&(&j.ops[0] - u * ph)) < 1e-12 && (ph.norm() - 1.0).abs() < 1e-12
            }
        );
        let mut rng = trajectory_rng(7, 0);
        let rec = sample_trajectory(&j, &plus(), 300, &mut rng, SamplingRule::NormWeighted).unwrap();
        let exact = linalg::expm(&(&h * C64::new(0.0, -3.0))) * plus();
        let overlap = (rec.state.adjoint() * &exact)[(0, 0)].norm();
        assert!((overlap - 1.0).abs() < 1e-8);
    }

    #[test]
    fn identity_jump_set_keeps_state() {
        let j = JumpSet { ops: vec![linalg::identity(2)], weights: vec![2.0], dropped_negative_mass: 0.0 };
        let mut rng = trajectory_rng(1, 0);
        let rec = sample_trajectory(&j, &plus(), 50, &mut rng, SamplingRule::Uniform).unwrap();
        assert!((rec.state - plus()).norm() < 1e-15);
        assert!(rec.jump_log.is_empty());
    }

    #[test]
    fn completeness_and_channel_equivalence() {
        let dt = 0.01;
        let (h, ch) = qubit(0.5);
        let j = jump_operators(&h, &ch, dt, 0.3, 3, None).unwrap();
        assert!(j.weights.windows(2).all(|w| w[0] >= w[1]));
        let dev = max_abs(&(j.completeness() - linalg::identity(2)));
        assert!(dev <= 10.0 * dt * dt, "completeness deviation {dev}");
        let vecs = StepMapVectors::new(&h, &ch, dt, 0.3, 3).unwrap();
        let rho = DenseOperator::from_row_slice(2, 2, &[c(0.8), C64::new(0.2, -0.3), C64::new(0.2, 0.3), c(0.2)]);
        let gap = max_abs(&(j.apply(&rho) - vecs.apply(&rho)));
        assert!(gap <= dt * dt + j.dropped_negative_mass, "gap {gap}");
    }

    #[test]
    fn negative_mass_is_enforced() {
        let (h, ch) = qubit(0.5);
        assert!(jump_operators(&h, &ch, 0.01, 0.0, 3, Some(1e-8)).is_err());
    }

    #[test]
    fn seeded_runs_replay() {
        let (h, ch) = qubit(0.5);
        let j = jump_operators(&h, &ch, 0.01, 0.3, 3, None).unwrap();
        let a = run_ensemble(&j, &plus(), &[50, 200], 16, 42, SamplingRule::NormWeighted).unwrap();
        let b = run_ensemble(&j, &plus(), &[50, 200], 16, 42, SamplingRule::NormWeighted).unwrap();
        assert_eq!(a.jump_log, b.jump_log);
        assert_eq!(a.states[1], b.states[1]);
        let other = run_ensemble(&j, &plus(), &[50, 200], 16, 43, SamplingRule::NormWeighted).unwrap();
        assert_ne!(a.jump_log, other.jump_log);
    }

    #[test]
    fn identity_observable_and_stderr_scaling() {
        let (h, ch) = qubit(0.5);
        let j = jump_operators(&h, &ch, 0.01, 0.3, 3, None).unwrap();
        let p1 = DenseOperator::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(0.0)]);
        let small = run_ensemble(&j, &plus(), &[100], 1000, 3, SamplingRule::NormWeighted).unwrap();
        let large = run_ensemble(&j, &plus(), &[100], 2000, 3, SamplingRule::NormWeighted).unwrap();
        let id = estimate_observable(&small, 0, &linalg::identity(2)).unwrap();
        assert!((id.mean - 1.0).abs() < 1e-12 && id.stderr < 1e-12);
        let raw = raw_mean(&small, 0, &linalg::identity(2));
        assert!((raw.mean - 1.0).abs() < 1e-2);
        let ratio = estimate_observable(&small, 0, &p1).unwrap().stderr / estimate_observable(&large, 0, &p1).unwrap().stderr;
        assert!((1.25..=1.6).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn uniform_rule_is_unbiased() {
        let (h, ch) = qubit(0.5);
        let j = jump_operators(&h, &ch, 0.01, 0.3, 3, None).unwrap();
        let mut rho = plus() * plus().adjoint();
        for _ in 0..3 {
            rho = j.apply(&rho);
        }
        let p1 = DenseOperator::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(0.0)]);
        let want = linalg::trace(&(&p1 * &rho)).re / linalg::trace(&rho).re;
        let ens = run_ensemble(&j, &plus(), &[3], 4000, 11, SamplingRule::Uniform).unwrap();
        let est = estimate_observable(&ens, 0, &p1).unwrap();
        assert!((est.mean - want).abs() < 4.0 * est.stderr + 1e-12, "{est:?} vs {want}");
    }

    #[test]
    fn multi_channel_split() {
        let h = pauli::string("ZI").unwrap() * c(0.5) + pauli::string("IX").unwrap();
        let bath = BathSpec::with_defaults(1.0).unwrap();
        let chs = vec![
            CouplingChannel::new(pauli::string("ZI").unwrap() * c(0.3), bath, FilterMode::FullLine).unwrap(),
            CouplingChannel::new(pauli::string("IZ").unwrap() * c(0.3), bath, FilterMode::FullLine).unwrap(),
        ];
        let dt = 0.005;
        let j = jump_operators_multi(&h, &chs, dt, 0.3, 3, None).unwrap();
        assert!(max_abs(&(j.completeness() - linalg::identity(4))) < 20.0 * dt * dt);
        assert!(jump_operators_multi(&h, &chs, 0.5, 0.3, 3, Some(1.0)).is_err());
    }
}
