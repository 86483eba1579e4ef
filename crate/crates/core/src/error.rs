use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("operator is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("degenerate Hamiltonian: gap {gap:.3e} between levels {m} and {n}")]
    Degenerate { m: usize, n: usize, gap: f64 },

    #[error("insufficient history: need span {required:.4}, have {available:.4}")]
    InsufficientHistory { required: f64, available: f64 },

    #[error("integration diverged at t = {t:.4}: trace drift {trace_drift:.3e}, hermiticity drift {herm_drift:.3e}")]
    Diverged { t: f64, trace_drift: f64, herm_drift: f64 },

    #[error("explicit bath insufficient: residual {residual:.4} exceeds {limit}")]
    InsufficientBath { residual: f64, limit: f64 },

    #[error("not supported: {0}")]
    Unsupported(String),

    #[error("configuration error:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
