//! Master-equation right-hand sides, the fixed-step integrator and the
//! error-budget tables.

pub mod budget;
pub mod evolve;
pub mod generator;
pub mod integral;

pub use budget::{error_budget, ErrorBudget};
pub use evolve::{evolve, EvolutionConfig, Trajectory, Variant};
pub use generator::{
    averaging_shifts, lamb_shift, rhs_davies, rhs_local_me, steady_state, superoperator, Corrections, DaviesGenerator, Generator,
    LocalGenerator,
};
pub use integral::{HistoryBuffer, HistoryStart, IntegralGenerator};
