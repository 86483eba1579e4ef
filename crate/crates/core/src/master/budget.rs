//! Order-of-magnitude error budget of the Markovian approximations.
//!
//! The entries are proxies, not certified bounds: numerical prefactors of
//! order one are dropped in the per-half-life tables.

use std::f64::consts::{E, PI};

use serde::Serialize;

/// Rate constant `c` in the `e^{cn}` growth of the secular approximation.
pub const SECULAR_SPREAD_RATE: f64 = 1.0;

#[derive(Debug, Clone, Serialize)]
pub struct BudgetRow {
    pub equation: String,
    pub born: f64,
    pub other: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BudgetTable {
    pub name: String,
    /// Normalization of every entry, e.g. `eps / (A^2 t)`.
    pub normalization: String,
    pub rows: Vec<BudgetRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorBudget {
    /// `||A_f|| <= 4 sqrt(pi) e ||A||`.
    pub filtered_norm_bound: f64,
    /// Time-averaging error `(4 pi e)^2 ||A||^4 T' t`.
    pub eps_average: f64,
    /// Markovian replacement error `(4 pi e)^2 ||A||^4 beta t`.
    pub eps_markov: f64,
    /// Born proxy `||A||^4 beta t` (or `||A||^4 t^4 / beta^2` when `t < beta`).
    pub born_proxy: f64,
    /// Secular-approximation term `n sqrt(n) e^{cn} ||A|| * ||A||^2 t`.
    pub secular: f64,
    /// True when `t < beta`, outside the tabulated regime.
    pub short_time: bool,
    pub tables: Vec<BudgetTable>,
}

/// Error estimates for `n_qubits` qubits each coupled with strength `a_norm`.
pub fn error_budget(n_qubits: usize, a_norm: f64, beta: f64, t_prime: f64, t: f64) -> ErrorBudget {
    let a2 = a_norm * a_norm;
    let a4 = a2 * a2;
    let k = (4.0 * PI * E).powi(2);
    let n = n_qubits as f64;
    let short_time = t < beta;
    let born_proxy = if short_time { a4 * t.powi(4) / (beta * beta).max(f64::MIN_POSITIVE) } else { a4 * beta * t };
    let growth = n * n.sqrt() * (SECULAR_SPREAD_RATE * n).exp();
    let row = |equation: &str, born: f64, other: f64| BudgetRow { equation: equation.into(), born, other };
    let single = BudgetTable {
        name: "single_qubit".into(),
        normalization: "eps/(A^2 t)".into(),
        rows: vec![
            row("lindblad", a2 * beta, a2 * beta + a_norm),
            row("local_me", a2 * beta, a2 * (beta + t_prime)),
            row("integral", a2 * beta, t_prime * a2),
        ],
    };
    let many = BudgetTable {
        name: "n_qubit".into(),
        normalization: "eps/(A^2 t)".into(),
        rows: vec![
            row("lindblad", n * n * a2 * beta, n * n * a2 * beta + growth * a_norm),
            row("local_me", n * n * a2 * beta, n * n * a2 * (beta + t_prime)),
            row("integral", n * n * a2 * beta, t_prime * n * n * a2),
        ],
    };
    let b2 = beta * beta;
    let local = BudgetTable {
        name: "local_observables".into(),
        normalization: "eps_loc/(A^2 t_*), t_* = beta".into(),
        rows: vec![row("local_me", a2 * b2 * beta, a2 * (b2 * beta + t_prime * b2)), row("integral", a2 * b2 * beta, t_prime * a2 * b2)],
    };
    ErrorBudget {
        filtered_norm_bound: 4.0 * PI.sqrt() * E * a_norm,
        eps_average: k * a4 * t_prime * t,
        eps_markov: k * a4 * beta * t,
        born_proxy,
        secular: growth * a_norm * a2 * t,
        short_time,
        tables: vec![single, many, local],
    }
}
