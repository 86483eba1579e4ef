//! Time-averaged integral equation with an explicit memory kernel.
//!
//! For every averaging shift `s_k` the memory term
//!
//! ```text
//! X_k(s) = int_0^inf C(tau) A(s_k - tau) rho(s - delta_k - tau) d tau
//! ```
//!
//! enters as `[X_k, A_k] + [A_k, X_k^dagger]`, with delay `delta_k = T'` for the
//! negative shift and zero otherwise. The history is interpolated piecewise
//! linearly between grid samples and the kernel is integrated exactly against
//! each hat function (product integration), so a constant history reproduces
//! the half-line filtered operator.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{CouplingChannel, SpectralDecomposition};
use crate::linalg::{self, DenseOperator, C64, I};
use crate::master::generator::{averaging_shifts, effective_hamiltonian, Corrections};
use crate::special::gauss_legendre;

/// How the memory integral treats times before the start of the run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryStart {
    /// Memory truncated at `t = 0`: the filter is the finite window `int_0^t`.
    #[default]
    FiniteWindow,
    /// `rho(t) = rho(0)` for `t < 0`.
    ConstantHistory,
}

/// Density matrices on the grid `t_n = n dt`.
#[derive(Debug, Clone)]
pub struct HistoryBuffer {
    dt: f64,
    first: usize,
    samples: VecDeque<DenseOperator>,
    initial: DenseOperator,
    depth: usize,
}

impl HistoryBuffer {
    /// Keeps at least `depth` most recent samples plus the initial state.
    pub fn new(rho0: DenseOperator, dt: f64, depth: usize) -> Self {
        let mut samples = VecDeque::with_capacity(depth + 1);
        samples.push_back(rho0.clone());
        Self { dt, first: 0, samples, initial: rho0, depth: depth.max(1) }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Index of the newest sample.
    pub fn latest(&self) -> usize {
        self.first + self.samples.len() - 1
    }

    pub fn time(&self) -> f64 {
        self.latest() as f64 * self.dt
    }

    pub fn push(&mut self, rho: DenseOperator) {
        self.samples.push_back(rho);
        while self.samples.len() > self.depth + 1 {
            self.samples.pop_front();
            self.first += 1;
        }
    }

    pub fn initial(&self) -> &DenseOperator {
        &self.initial
    }

    pub fn get(&self, n: usize) -> Result<&DenseOperator> {
        if n < self.first || n > self.latest() {
            return Err(Error::InsufficientHistory {
                required: (self.latest() - n.min(self.latest())) as f64 * self.dt,
                available: (self.samples.len() - 1) as f64 * self.dt,
            });
        }
        Ok(&self.samples[n - self.first])
    }

    pub fn newest(&self) -> &DenseOperator {
        self.samples.back().expect("history is never empty")
    }
}

/// Product-integration weights of one shift and one stage offset.
#[derive(Debug, Clone)]
struct StageWeights {
    /// Node nearest to `tau = 0`: the stage state for zero delay, else `rho_{n-d+1}`.
    near: DenseOperator,
    /// `full[j]`: weight of `rho_{n-d-j}` when interior; `edge[j]`: when it is `rho_0`.
    full: Vec<DenseOperator>,
    edge: Vec<DenseOperator>,
    /// `suffix[j] = sum_{i >= j} full[i]`, for the constant-history start.
    suffix: Vec<DenseOperator>,
}

#[derive(Debug, Clone)]
struct ShiftKernel {
    a: DenseOperator,
    delay: usize,
    /// Indexed by stage offset `c in {0, 1/2, 1}`.
    stages: [StageWeights; 3],
}

/// Integral-equation right-hand side.
#[derive(Debug, Clone)]
pub struct IntegralGenerator {
    dim: usize,
    dt: f64,
    h_eff: DenseOperator,
    kernels: Vec<ShiftKernel>,
    weight: f64,
    start: HistoryStart,
    nodes: usize,
}

const STAGE_OFFSETS: [f64; 3] = [0.0, 0.5, 1.0];

/// `int_a^b C(tau) e^{-i e tau} phi(tau) d tau` with 10-point Gauss-Legendre.
fn panel<F: Fn(f64) -> f64>(ch: &CouplingChannel, e: f64, a: f64, b: f64, phi: F, gl: &(Vec<f64>, Vec<f64>)) -> C64 {
    if b <= a {
        return C64::new(0.0, 0.0);
    }
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut s = C64::new(0.0, 0.0);
    for (x, w) in gl.0.iter().zip(&gl.1) {
        let tau = mid + half * x;
        s += ch.bath.correlation(tau) * C64::new(0.0, -e * tau).exp() * (w * half * phi(tau));
    }
    s
}

impl IntegralGenerator {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        h: &DenseOperator,
        channels: &[CouplingChannel],
        dt: f64,
        t_prime: f64,
        avg_points: usize,
        history_span: f64,
        corr: Corrections,
        start: HistoryStart,
    ) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
        }
        let delay_steps = (t_prime / dt).round();
        if (delay_steps * dt - t_prime).abs() > 1e-9 * t_prime.max(dt) {
            return Err(Error::InvalidParameter(format!("T' = {t_prime} must be an integer multiple of dt = {dt}")));
        }
        if t_prime > 0.0 && dt > t_prime / 10.0 + 1e-15 {
            return Err(Error::InvalidParameter(format!("dt = {dt} exceeds T'/10 = {}", t_prime / 10.0)));
        }
        for ch in channels {
            let need = 5.0 * ch.bath.decay_time();
            if history_span < need - 1e-12 {
                return Err(Error::InsufficientHistory { required: need, available: history_span });
            }
            if !ch.bath.correlation_peak().is_finite() {
                return Err(Error::InvalidParameter("correlation prefactor overflows".into()));
            }
        }
        let dim = h.nrows();
        let spec = SpectralDecomposition::new(h)?;
        let shifts = averaging_shifts(t_prime, avg_points)?;
        let nodes = (history_span / dt).ceil() as usize;
        let gl = gauss_legendre(10);
        let mut kernels = Vec::new();
        for ch in channels {
            if ch.dim() != dim {
                return Err(Error::Dimension(format!("channel dim {} vs H dim {dim}", ch.dim())));
            }
            let ae = spec.to_eigenbasis(&ch.op);
            // scalar hat integrals per gap, per stage offset
            let gaps: Vec<f64> = (0..dim * dim).map(|k| spec.gap(k / dim, k % dim)).collect();
            let mut scal: Vec<[Vec<Vec<C64>>; 4]> = Vec::new(); // [near_d0, near_d, far..] see below
            for &cfrac in &STAGE_OFFSETS {
                let len = cfrac * dt;
                let mut near0 = vec![C64::new(0.0, 0.0); dim * dim];
                let mut neard = near0.clone();
                let mut far0 = near0.clone();
                let mut fard = near0.clone();
                let mut right = vec![vec![C64::new(0.0, 0.0); dim * dim]; nodes + 1];
                let mut left = right.clone();
                for (k, &e) in gaps.iter().enumerate() {
                    if len > 0.0 {
                        near0[k] = panel(ch, e, 0.0, len, |t| 1.0 - t / len, &gl);
                        far0[k] = panel(ch, e, 0.0, len, |t| t / len, &gl);
                        neard[k] = panel(ch, e, 0.0, len, |t| (len - t) / dt, &gl);
                        fard[k] = panel(ch, e, 0.0, len, |t| 1.0 - (len - t) / dt, &gl);
                    }
                    for j in 0..=nodes {
                        let tj = len + j as f64 * dt;
                        right[j][k] = panel(ch, e, tj, tj + dt, |t| 1.0 - (t - tj) / dt, &gl);
                        if j > 0 {
                            left[j][k] = panel(ch, e, tj - dt, tj, |t| 1.0 - (tj - t) / dt, &gl);
                        }
                    }
                }
                scal.push([vec![near0, neard, far0, fard], right, left, vec![]]);
            }
            for &s in &shifts {
                let a_shift = spec.heisenberg(&ch.op, s);
                let delay = if s < 0.0 { delay_steps as usize } else { 0 };
                let to_op = |w: &[C64]| {
                    let mut m = ae.clone();
                    for (k, z) in m.iter_mut().enumerate() {
                        // column-major storage: k = col * dim + row
                        let (row, col) = (k % dim, k / dim);
                        let idx = row * dim + col;
                        *z *= w[idx] * C64::new(0.0, gaps[idx] * s).exp();
                    }
                    spec.from_eigenbasis(&m)
                };
                let stages: Vec<StageWeights> = scal
                    .iter()
                    .map(|[first, right, left, _]| {
                        let (near, far) = if delay == 0 { (&first[0], &first[2]) } else { (&first[1], &first[3]) };
                        let mut full = Vec::with_capacity(nodes + 1);
                        let mut edge = Vec::with_capacity(nodes + 1);
                        for j in 0..=nodes {
                            let lw: Vec<C64> = if j == 0 { far.clone() } else { left[j].clone() };
                            let fw: Vec<C64> = if j == nodes { lw.clone() } else { lw.iter().zip(&right[j]).map(|(a, b)| a + b).collect() };
                            full.push(to_op(&fw));
                            edge.push(to_op(&lw));
                        }
                        let mut suffix = vec![linalg::zeros(dim); nodes + 2];
                        for j in (0..=nodes).rev() {
                            suffix[j] = &suffix[j + 1] + &full[j];
                        }
                        StageWeights { near: to_op(near), full, edge, suffix }
                    })
                    .collect();
                let stages: [StageWeights; 3] = stages.try_into().expect("three stage offsets");
                kernels.push(ShiftKernel { a: a_shift, delay, stages });
            }
        }
        let h_eff = effective_hamiltonian(h, &spec, channels, &shifts, corr)?;
        Ok(Self { dim, dt, h_eff, kernels, weight: 1.0 / shifts.len() as f64, start, nodes })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of memory nodes kept (`ceil(history_span / dt)`).
    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn max_delay(&self) -> usize {
        self.kernels.iter().map(|k| k.delay).max().unwrap_or(0)
    }

    fn stage_index(c: f64) -> Result<usize> {
        STAGE_OFFSETS
            .iter()
            .position(|&x| (x - c).abs() < 1e-12)
            .ok_or_else(|| Error::InvalidParameter(format!("stage offset {c} not in {{0, 1/2, 1}}")))
    }

    /// Right-hand side at `t_n + c dt` where `n` is the newest history index and
    /// `stage` the state there (`stage` equals the newest sample when `c = 0`).
    pub fn rhs(&self, history: &HistoryBuffer, c: f64, stage: &DenseOperator) -> Result<DenseOperator> {
        let ci = Self::stage_index(c)?;
        let n = history.latest();
        let w = C64::new(self.weight, 0.0);
        let mut out = (&self.h_eff * stage - stage * &self.h_eff) * (-I);
        let constant = self.start == HistoryStart::ConstantHistory;
        for k in &self.kernels {
            let sw = &k.stages[ci];
            let d = k.delay as isize;
            let n = n as isize;
            let mut x = linalg::zeros(self.dim);
            let mut y = linalg::zeros(self.dim);
            let mut add = |wt: &DenseOperator, rho: &DenseOperator| {
                x += wt * rho;
                y += rho * wt.adjoint();
            };
            // first panel
            if c > 0.0 {
                if d == 0 {
                    add(&sw.near, stage);
                } else if n - d + 1 >= 0 {
                    add(&sw.near, history.get((n - d + 1) as usize)?);
                } else if constant {
                    add(&sw.near, history.initial());
                }
            }
            let m0 = n - d;
            for j in 0..=self.nodes {
                let m = m0 - j as isize;
                if m >= 1 {
                    add(&sw.full[j], history.get(m as usize)?);
                } else if m == 0 {
                    if constant {
                        add(&sw.suffix[j], history.initial());
                    } else {
                        add(&sw.edge[j], history.initial());
                    }
                    break;
                } else {
                    if constant {
                        add(&sw.suffix[j], history.initial());
                    }
                    break;
                }
            }
            out += (&x * &k.a - &k.a * &x + &k.a * &y - &y * &k.a) * w;
        }
        Ok(out)
    }
}
