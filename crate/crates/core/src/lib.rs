//! Rounded random coefficient GARCH models for count time series.
//!
//! The crate covers simulation, weighted least squares estimation of the
//! mean parameters, profile estimation of the dispersion parameters,
//! information-criterion order selection, residual diagnostics, rolling
//! forecasts and Monte Carlo studies.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod forecast;
pub mod io;
pub mod kernel;
pub mod parallel;
pub mod process;
pub mod selection;
pub mod study;

pub use error::{Error, Result};
pub use estimator::{FitConfig, FitResult, WeightMode};
pub use kernel::{LinkFunction, NuRule, VarianceFamily};
pub use parallel::Execution;
pub use process::{
    CountSeries, InnovationLaw, LambdaParams, ModelOrder, ModelSpec, ThetaParams,
};
