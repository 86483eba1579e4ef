//! Filtered coupling operators.
//!
//! In the eigenbasis of `H` the filter acts entrywise on `A_mn` through a
//! scalar factor of the Bohr frequency `E_mn = E_m - E_n`:
//!
//! ```text
//! finite window  int_0^t C(tau) e^{-i E_mn tau} d tau
//! half line      pi S(E_mn) + i D(E_mn)
//! full line      2 pi S(E_mn)
//! ```

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bath::{BathSpec, CUTOFF_RELATIVE};
use crate::error::{Error, Result};
use crate::linalg::{self, embed, hermiticity_deviation, max_abs, operator_norm, partial_trace, DenseOperator, C64};
use crate::special::Composite;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    FiniteWindow(f64),
    HalfLine,
    FullLine,
}

#[derive(Debug, Clone)]
pub struct CouplingChannel {
    pub op: DenseOperator,
    pub bath: BathSpec,
    pub mode: FilterMode,
}

impl CouplingChannel {
    pub fn new(op: DenseOperator, bath: BathSpec, mode: FilterMode) -> Result<Self> {
        if !op.is_square() {
            return Err(Error::Dimension("coupling operator must be square".into()));
        }
        let dev = hermiticity_deviation(&op);
        if dev > 1e-12 * max_abs(&op).max(1e-300) {
            return Err(Error::NotHermitian { deviation: dev });
        }
        if let FilterMode::FiniteWindow(t) = mode {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::InvalidParameter(format!("finite window length {t}")));
            }
        }
        Ok(Self { op, bath, mode })
    }

    pub fn with_mode(&self, mode: FilterMode) -> Self {
        Self { op: self.op.clone(), bath: self.bath, mode }
    }

    pub fn dim(&self) -> usize {
        self.op.nrows()
    }
}

/// Eigen-decomposition of a system Hamiltonian.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub energies: Vec<f64>,
    pub basis: DenseOperator,
}

impl SpectralDecomposition {
    pub fn new(h: &DenseOperator) -> Result<Self> {
        let e = linalg::eig_hermitian(h)?;
        Ok(Self { energies: e.values, basis: e.vectors })
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// `E_m - E_n`.
    pub fn gap(&self, m: usize, n: usize) -> f64 {
        self.energies[m] - self.energies[n]
    }

    pub fn to_eigenbasis(&self, op: &DenseOperator) -> DenseOperator {
        self.basis.adjoint() * op * &self.basis
    }

    pub fn from_eigenbasis(&self, op: &DenseOperator) -> DenseOperator {
        &self.basis * op * self.basis.adjoint()
    }

    /// Apply `f(E_mn)` entrywise in the eigenbasis.
    pub fn map_entries<F>(&self, op: &DenseOperator, mut f: F) -> DenseOperator
    where
        F: FnMut(f64) -> C64,
    {
        let mut e = self.to_eigenbasis(op);
        let d = self.dim();
        for m in 0..d {
            for n in 0..d {
                e[(m, n)] *= f(self.gap(m, n));
            }
        }
        self.from_eigenbasis(&e)
    }

    /// `e^{iHt} A e^{-iHt}`.
    pub fn heisenberg(&self, op: &DenseOperator, t: f64) -> DenseOperator {
        if t == 0.0 {
            return op.clone();
        }
        self.map_entries(op, |w| C64::new(0.0, w * t).exp())
    }

    /// `e^{-iHt}`.
    pub fn propagator(&self, t: f64) -> DenseOperator {
        let d = self.dim();
        let mut diag = linalg::zeros(d);
        for k in 0..d {
            diag[(k, k)] = C64::new(0.0, -self.energies[k] * t).exp();
        }
        self.from_eigenbasis(&diag)
    }
}

/// `e^{iHt} A e^{-iHt}` through the matrix exponential.
pub fn heisenberg(a: &DenseOperator, h: &DenseOperator, t: f64) -> DenseOperator {
    let u = linalg::expm(&(h * C64::new(0.0, -t)));
    u.adjoint() * a * u
}

/// `int_0^t C(tau) e^{-i e tau} d tau`.
pub fn window_factor(bath: &BathSpec, e: f64, t: f64) -> C64 {
    let hi = t.min(bath.cutoff_time(1e-18));
    if hi <= 0.0 {
        return C64::new(0.0, 0.0);
    }
    let omega = bath.beta / (4.0 * bath.t_b * bath.t_b) + e.abs();
    let panels = ((hi / bath.t_b) * 3.0 + hi * omega / PI * 3.0).ceil().max(8.0) as usize;
    Composite::new(0.0, hi, panels).integrate(|tau| bath.correlation(tau) * C64::new(0.0, -e * tau).exp())
}

/// Scalar filter factor at Bohr frequency `e`.
pub fn filter_factor(bath: &BathSpec, mode: FilterMode, e: f64) -> C64 {
    match mode {
        FilterMode::FullLine => C64::new(2.0 * PI * bath.spectral_density(e), 0.0),
        FilterMode::HalfLine => C64::new(PI * bath.spectral_density(e), bath.pv(e)),
        FilterMode::FiniteWindow(t) => window_factor(bath, e, t),
    }
}

fn check_finite(op: &DenseOperator, what: &str) -> Result<()> {
    if op.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{what} overflowed; the bath prefactor exp[(beta/4t_b)^2] is not representable")))
    }
}

/// Filtered operator `A^f` of a channel.
pub fn filtered(ch: &CouplingChannel, spec: &SpectralDecomposition) -> Result<DenseOperator> {
    if ch.dim() != spec.dim() {
        return Err(Error::Dimension(format!("coupling of dim {} vs Hamiltonian of dim {}", ch.dim(), spec.dim())));
    }
    let out = spec.map_entries(&ch.op, |e| filter_factor(&ch.bath, ch.mode, e));
    check_finite(&out, "filtered operator")?;
    Ok(out)
}

/// Cross-correlation `C_ij` between the bath operators of channels `i`, `j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairCorrelation {
    pub i: usize,
    pub j: usize,
    pub bath: BathSpec,
}

/// `A^f_ij = int_0^inf C_ij(tau) A_j(-tau) d tau`, paired with `A_i` in the
/// generator. Entries with `|site_i - site_j| >= radius` or without a listed
/// correlation are `None`.
pub fn filtered_multi(
    ops: &[DenseOperator],
    sites: Option<&[usize]>,
    correlations: &[PairCorrelation],
    mode: FilterMode,
    spec: &SpectralDecomposition,
    radius: Option<usize>,
) -> Result<Vec<Vec<Option<DenseOperator>>>> {
    let n = ops.len();
    if radius.is_some() {
        match sites {
            None => return Err(Error::InvalidParameter("site metadata required for a finite truncation radius".into())),
            Some(s) if s.len() != n => return Err(Error::InvalidParameter(format!("{} site labels for {n} channels", s.len()))),
            _ => {}
        }
    }
    let mut out = vec![vec![None; n]; n];
    for pc in correlations {
        if pc.i >= n || pc.j >= n {
            return Err(Error::InvalidParameter(format!("correlation ({}, {}) out of range", pc.i, pc.j)));
        }
        if let (Some(r), Some(s)) = (radius, sites) {
            if s[pc.i].abs_diff(s[pc.j]) >= r {
                continue;
            }
        }
        let ch = CouplingChannel::new(ops[pc.j].clone(), pc.bath, mode)?;
        out[pc.i][pc.j] = Some(filtered(&ch, spec)?);
    }
    Ok(out)
}

/// Lieb-Robinson constants for block truncation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiebRobinson {
    pub velocity: f64,
    pub c: f64,
    /// Spatial slack `x`.
    pub slack: f64,
}

impl LiebRobinson {
    /// `v = 2 max ||h_loc||`, `c = 1`.
    pub fn default_for(local_terms: &[DenseOperator], slack: f64) -> Self {
        let v = local_terms.iter().map(operator_norm).fold(0.0, f64::max);
        Self { velocity: 2.0 * v, c: 1.0, slack }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationBound {
    pub t_x: f64,
    pub eps1: f64,
    pub eps2: f64,
}

impl TruncationBound {
    pub fn total(&self) -> f64 {
        self.eps1 + self.eps2
    }
}

/// `eps1 = ||A|| int_{T_x}^inf |C|`, `eps2 = ||A|| int_0^{T_x} |C| e^{-c x}`.
pub fn lieb_robinson_bound(a_norm: f64, bath: &BathSpec, t_x: f64, lr: &LiebRobinson) -> TruncationBound {
    TruncationBound {
        t_x,
        eps1: a_norm * bath.correlation_l1(t_x, f64::INFINITY),
        eps2: a_norm * bath.correlation_l1(0.0, t_x) * (-lr.c * lr.slack).exp(),
    }
}

/// Filtered operator with `H` replaced by its restriction to `block`.
///
/// `dims` are the local dimensions of every site, `support` the sites on which
/// `ch.op` acts. Returns `A^f_c` embedded in the full space and the bound on
/// `||A^f_c - A^f||`.
pub fn truncated_filtered(
    ch: &CouplingChannel,
    h_full: &DenseOperator,
    dims: &[usize],
    support: &[usize],
    block: &[usize],
    lr: &LiebRobinson,
) -> Result<(DenseOperator, TruncationBound)> {
    if let Some(s) = support.iter().find(|s| !block.contains(s)) {
        return Err(Error::InvalidParameter(format!("block {block:?} does not contain support site {s}")));
    }
    if block.iter().any(|&s| s >= dims.len()) {
        return Err(Error::InvalidParameter(format!("block {block:?} out of range")));
    }
    let d_total: usize = dims.iter().product();
    let d_block: usize = block.iter().map(|&s| dims[s]).product();
    let comp = (d_total / d_block) as f64;
    let mut sorted = block.to_vec();
    sorted.sort_unstable();
    let h_block = partial_trace(h_full, dims, &sorted)? / C64::new(comp, 0.0);
    let h_c = embed(&h_block, &sorted, dims)?;
    let spec = SpectralDecomposition::new(&h_c)?;
    let af = filtered(ch, &spec)?;

    let t_x = ((block.len() as f64 / 2.0 - support.len() as f64 / 2.0 - lr.slack) / lr.velocity).max(0.0);
    let bound = lieb_robinson_bound(operator_norm(&ch.op), &ch.bath, t_x, lr);
    Ok((af, bound))
}

/// Time window over which the correlation is resolved.
pub fn correlation_span(bath: &BathSpec) -> f64 {
    bath.cutoff_time(CUTOFF_RELATIVE)
}
