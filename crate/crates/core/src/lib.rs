//! Bivariate quadratic Hawkes price model: microscopic simulation, the
//! rough scaling limits, deterministic Volterra machinery and verification
//! statistics.

pub mod error;
pub mod grid;
pub mod kernels;
pub mod limit_sde;
pub mod montecarlo;
pub mod qhawkes_sim;
pub mod quadrature;
pub mod stats;
pub mod volterra;

pub use error::{Error, Result};
pub use grid::{Grid, GridSeries};
