//! Multi-output ensembles for multi-step time-series forecasting.
//!
//! The crate covers the full experimental pipeline: first differencing and
//! time delay embedding ([`series`]), a pool of multi-output regressors
//! ([`learners`]), dynamic combination rules with horizon weighting
//! strategies ([`combiner`]), pruning and rolling test evaluation
//! ([`ensemble`]), and Monte Carlo cross-validation with rank and
//! percentage-difference analyses ([`evaluation`]).

pub mod combiner;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod learners;
pub mod matrix;
pub mod rng;
pub mod series;
pub mod synthetic;

pub use error::{Error, Result};
pub use matrix::Matrix;
