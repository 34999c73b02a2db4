//! Debiased estimation of average treatment effects on the treated for binary outcomes
//! with high-dimensional covariates, by balancing the gradient of a penalized GLM.

pub mod balance;
pub mod baselines;
pub mod cli;
pub mod data;
pub mod error;
pub mod estimators;
pub mod glm;
pub mod io;
pub mod link;
pub mod linalg;
pub mod methods;
pub mod rng;
pub mod sim;
pub mod stats;

pub use data::Dataset;
pub use error::{Error, Result};
pub use link::{Link, LinkFn};
