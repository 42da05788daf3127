//! Stochastic calculus on matrix Lie groups: Itô and Stratonovich exponentials
//! and logarithms, left-invariant line integrals, a stochastic
//! Campbell–Hausdorff check and Monte Carlo martingale tests.

pub mod algebra;
pub mod calculus;
pub mod campbell;
pub mod connections;
pub mod error;
pub mod explog;
pub mod groups;
pub mod martingale;
pub mod paths;
pub mod suite;

pub use error::{Error, Result};
