//! Bayesian interventional mean processes for two-stage causal data fusion.

pub mod bayes_cme;
pub mod bo;
pub mod cli;
pub mod embedding;
pub mod error;
pub mod experiments;
pub mod fusion;
pub mod gp;
pub mod kernel;
pub mod points;
pub mod quadrature;

pub use error::{Error, Result};
pub use points::{Dataset, Points};
