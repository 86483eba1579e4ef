//! Dense complex linear algebra on operators.
//!
//! Operators are `DMatrix<Complex64>`. Vectorization is row-major:
//! element `(i, j)` of a `d x d` operator sits at index `i * d + j`.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type DenseOperator = DMatrix<C64>;
pub type OperatorVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn identity(dim: usize) -> DenseOperator {
    DenseOperator::identity(dim, dim)
}

pub fn zeros(dim: usize) -> DenseOperator {
    DenseOperator::zeros(dim, dim)
}

pub fn dagger(m: &DenseOperator) -> DenseOperator {
    m.adjoint()
}

pub fn commutator(a: &DenseOperator, b: &DenseOperator) -> DenseOperator {
    a * b - b * a
}

pub fn anticommutator(a: &DenseOperator, b: &DenseOperator) -> DenseOperator {
    a * b + b * a
}

pub fn trace(m: &DenseOperator) -> C64 {
    m.trace()
}

/// Largest absolute entry.
pub fn max_abs(m: &DenseOperator) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn frobenius(m: &DenseOperator) -> f64 {
    m.norm()
}

/// Largest entry of `|m - m^dagger|`.
pub fn hermiticity_deviation(m: &DenseOperator) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

pub fn is_hermitian(m: &DenseOperator, tol: f64) -> bool {
    m.is_square() && hermiticity_deviation(m) <= tol
}

pub fn hermitian_part(m: &DenseOperator) -> DenseOperator {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Spectral norm, `sqrt(max eig(m^dagger m))`.
pub fn operator_norm(m: &DenseOperator) -> f64 {
    let g = hermitian_part(&(m.adjoint() * m));
    match eig_hermitian(&g) {
        Ok(e) => e.values.last().copied().unwrap_or(0.0).max(0.0).sqrt(),
        Err(_) => frobenius(m),
    }
}

pub fn vectorize(m: &DenseOperator) -> OperatorVector {
    let c = m.ncols();
    OperatorVector::from_fn(m.nrows() * c, |k, _| m[(k / c, k % c)])
}

pub fn devectorize(v: &OperatorVector, dim: usize) -> Result<DenseOperator> {
    if v.len() != dim * dim {
        return Err(Error::Dimension(format!("vector of length {} cannot be reshaped to {dim}x{dim}", v.len())));
    }
    Ok(DenseOperator::from_fn(dim, dim, |i, j| v[i * dim + j]))
}

/// Hilbert-Schmidt inner product `<V|W> = Tr(V^dagger W)`.
pub fn inner(v: &DenseOperator, w: &DenseOperator) -> C64 {
    v.iter().zip(w.iter()).map(|(a, b)| a.conj() * b).sum()
}

pub fn kron(a: &DenseOperator, b: &DenseOperator) -> DenseOperator {
    a.kronecker(b)
}

fn check_dims(total: usize, dims: &[usize]) -> Result<()> {
    let prod: usize = dims.iter().product();
    if prod != total || dims.contains(&0) {
        return Err(Error::Dimension(format!("subsystem dims {dims:?} do not multiply to {total}")));
    }
    Ok(())
}

/// Digits of `index` in the mixed radix `dims` (first site most significant).
fn digits(mut index: usize, dims: &[usize], out: &mut [usize]) {
    for k in (0..dims.len()).rev() {
        out[k] = index % dims[k];
        index /= dims[k];
    }
}

fn compose(sites: &[usize], dims: &[usize], digit: &[usize]) -> usize {
    sites.iter().fold(0, |acc, &s| acc * dims[s] + digit[s])
}

/// Trace out every subsystem not listed in `keep`.
pub fn partial_trace(m: &DenseOperator, dims: &[usize], keep: &[usize]) -> Result<DenseOperator> {
    if !m.is_square() {
        return Err(Error::Dimension("partial trace of a non-square matrix".into()));
    }
    check_dims(m.nrows(), dims)?;
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.iter().any(|&s| s >= dims.len()) {
        return Err(Error::Dimension(format!("keep {keep:?} out of range for {} sites", dims.len())));
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|s| !kept.contains(s)).collect();
    let dk: usize = kept.iter().map(|&s| dims[s]).product();
    let dt: usize = traced.iter().map(|&s| dims[s]).product();
    let kept_dims: Vec<usize> = kept.iter().map(|&s| dims[s]).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&s| dims[s]).collect();

    let mut out = zeros(dk);
    let mut full_a = vec![0; dims.len()];
    let mut full_b = vec![0; dims.len()];
    let mut ka = vec![0; kept.len()];
    let mut kb = vec![0; kept.len()];
    let mut tr = vec![0; traced.len()];
    let full_index = |digit: &[usize]| (0..dims.len()).fold(0, |acc, s| acc * dims[s] + digit[s]);
    for a in 0..dk {
        digits(a, &kept_dims, &mut ka);
        for b in 0..dk {
            digits(b, &kept_dims, &mut kb);
            let mut acc = ZERO;
            for r in 0..dt {
                digits(r, &traced_dims, &mut tr);
                for (k, &s) in kept.iter().enumerate() {
                    full_a[s] = ka[k];
                    full_b[s] = kb[k];
                }
                for (k, &s) in traced.iter().enumerate() {
                    full_a[s] = tr[k];
                    full_b[s] = tr[k];
                }
                acc += m[(full_index(&full_a), full_index(&full_b))];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(out)
}

/// Embed an operator acting on `sites` (in the listed order) into the full
/// tensor-product space with local dimensions `dims`.
pub fn embed(op: &DenseOperator, sites: &[usize], dims: &[usize]) -> Result<DenseOperator> {
    let d_sub: usize = sites.iter().map(|&s| dims[s]).product();
    if op.nrows() != d_sub || op.ncols() != d_sub {
        return Err(Error::Dimension(format!("operator of size {} does not match sites {sites:?}", op.nrows())));
    }
    let total: usize = dims.iter().product();
    let mut out = zeros(total);
    let mut da = vec![0; dims.len()];
    let mut db = vec![0; dims.len()];
    for a in 0..total {
        digits(a, dims, &mut da);
        for b in 0..total {
            digits(b, dims, &mut db);
            let spectator_match = (0..dims.len()).filter(|s| !sites.contains(s)).all(|s| da[s] == db[s]);
            if spectator_match {
                out[(a, b)] = op[(compose(sites, dims, &da), compose(sites, dims, &db))];
            }
        }
    }
    Ok(out)
}

/// Matrix exponential (Pade scaling and squaring).
pub fn expm(m: &DenseOperator) -> DenseOperator {
    m.exp()
}

#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns.
    pub vectors: DenseOperator,
}

impl HermitianEigen {
    pub fn reconstruct(&self) -> DenseOperator {
        let d = DenseOperator::from_diagonal(&DVector::from_iterator(self.values.len(), self.values.iter().map(|&x| C64::new(x, 0.0))));
        &self.vectors * d * self.vectors.adjoint()
    }
}

pub fn eig_hermitian(m: &DenseOperator) -> Result<HermitianEigen> {
    if !m.is_square() {
        return Err(Error::Dimension("eigendecomposition of a non-square matrix".into()));
    }
    let scale = max_abs(m).max(1.0);
    let dev = hermiticity_deviation(m);
    if dev > 1e-10 * scale {
        return Err(Error::NotHermitian { deviation: dev });
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(HermitianEigen { values: vec![], vectors: zeros(0) });
    }
    let eig = SymmetricEigen::try_new(hermitian_part(m), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Eigen("Hermitian eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DenseOperator::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok(HermitianEigen { values, vectors })
}

#[derive(Debug, Clone)]
pub struct GeneralEigen {
    pub values: Vec<C64>,
    /// Unit-norm right eigenvectors as columns.
    pub vectors: DenseOperator,
    /// Largest `||M v - lambda v|| / max(1, ||M||)` over all pairs.
    pub max_residual: f64,
    pub warnings: Vec<String>,
}

/// Eigen-decomposition of a general complex matrix through the complex Schur
/// form `M = Q T Q^dagger` and back-substitution on the triangular factor.
pub fn eig_general(m: &DenseOperator) -> Result<GeneralEigen> {
    if !m.is_square() {
        return Err(Error::Dimension("eigendecomposition of a non-square matrix".into()));
    }
    let n = m.nrows();
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 100_000).ok_or_else(|| Error::Eigen("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let norm = frobenius(m).max(1.0);
    let tiny = f64::EPSILON * norm;
    let mut warnings = Vec::new();
    let values: Vec<C64> = (0..n).map(|k| t[(k, k)]).collect();

    let mut y = DenseOperator::zeros(n, n);
    for k in 0..n {
        let lk = t[(k, k)];
        y[(k, k)] = ONE;
        for i in (0..k).rev() {
            let mut s = ZERO;
            for j in i + 1..=k {
                s += t[(i, j)] * y[(j, k)];
            }
            let mut den = t[(i, i)] - lk;
            if den.norm() < tiny {
                den = C64::new(tiny, 0.0);
                // a numerically zero cluster is a null space, not a defect
                if warnings.is_empty() && lk.norm() > tiny {
                    warnings.push(format!("near-defective eigenvalue {lk:.6e}: eigenvectors ill-conditioned"));
                }
            }
            y[(i, k)] = -s / den;
        }
    }
    let mut vectors = &q * y;
    for k in 0..n {
        let nk = vectors.column(k).norm();
        if nk > 0.0 {
            vectors.column_mut(k).unscale_mut(nk);
        }
    }
    let mut max_residual: f64 = 0.0;
    for k in 0..n {
        let v = vectors.column(k);
        let r = (m * v - v * values[k]).norm() / norm;
        max_residual = max_residual.max(r);
    }
    if max_residual > 1e-10 {
        warnings.push(format!("eigenpair residual {max_residual:.3e} exceeds 1e-10"));
    }
    Ok(GeneralEigen { values, vectors, max_residual, warnings })
}

pub mod pauli {
    use super::*;

    pub fn x() -> DenseOperator {
        DenseOperator::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
    }

    pub fn y() -> DenseOperator {
        DenseOperator::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
    }

    pub fn z() -> DenseOperator {
        DenseOperator::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
    }

    pub fn from_char(c: char) -> Option<DenseOperator> {
        match c.to_ascii_uppercase() {
            'I' => Some(identity(2)),
            'X' => Some(x()),
            'Y' => Some(y()),
            'Z' => Some(z()),
            _ => None,
        }
    }

    /// Tensor product of single-qubit Paulis, e.g. `"XZ"` is `sx (x) sz`.
    pub fn string(s: &str) -> Result<DenseOperator> {
        if s.is_empty() {
            return Err(Error::InvalidParameter("empty Pauli string".into()));
        }
        let mut out = identity(1);
        for c in s.chars() {
            let p = from_char(c).ok_or_else(|| Error::InvalidParameter(format!("bad Pauli letter '{c}' in \"{s}\"")))?;
            out = kron(&out, &p);
        }
        Ok(out)
    }

    /// `op` on qubit `site` of an `n`-qubit register.
    pub fn on_site(op: &DenseOperator, site: usize, n: usize) -> DenseOperator {
        let mut out = identity(1);
        for k in 0..n {
            out = if k == site { kron(&out, op) } else { kron(&out, &identity(2)) };
        }
        out
    }
}
