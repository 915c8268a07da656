//! Penalized selection among linear estimators in the correlated Gaussian
//! linear model `y = X beta + R z`.

pub mod cli;
pub mod conc;
pub mod error;
pub mod families;
pub mod familyspec;
pub mod harness;
pub mod identify;
pub mod io;
pub mod linalg;
pub mod linmodel;
pub mod penalty;
pub mod rng;
pub mod select;

pub use error::{LinselError, Result};
pub use linmodel::{EstimatorMatrix, LinearModel, ModelId, RiskMode};
