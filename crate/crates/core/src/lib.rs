//! State-level influenza-like-illness forecasting.
//!
//! Autoregressive linear, median (quantile) and Poisson models with
//! optional neighbor-state and national trend covariates, refit at every
//! forecast origin, wrapped in online conformal intervals and scored with
//! rMSE and the weighted interval score.

pub mod conformal;
pub mod epiweek;
pub mod error;
pub mod features;
pub mod geography;
pub mod ingest;
pub mod model;
pub mod regression;
pub mod report;
pub mod runner;
pub mod scoring;
pub mod states;
pub mod validate;

pub use error::{Error, Result};
