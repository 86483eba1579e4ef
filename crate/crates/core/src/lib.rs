//! Local Markovian master equations for weakly coupled open quantum systems.
//!
//! The crate builds filtered coupling operators from a Gaussian thermal bath,
//! integrates the local master equation and its integral and secular
//! relatives, and provides diagnostics: fixed-point analysis, a positivity
//! test through channel-state duality, a quantum-jump unraveling and an exact
//! small-bath benchmark.

pub mod bath;
pub mod bench;
pub mod error;
pub mod filter;
pub mod fixed_point;
pub mod linalg;
pub mod master;
pub mod positivity;
pub mod scenario;
pub mod special;
pub mod unravel;

pub use error::{Error, Result};
