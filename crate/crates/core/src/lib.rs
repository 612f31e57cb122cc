//! Maximum-likelihood estimation of weekly-frequency choice models.
//!
//! Four families share one data model and one estimator:
//!
//! - `oev_gamma`: ordered extreme value with Gamma heterogeneity;
//! - `split_oev_gamma`: a logit hurdle for zero with the Gamma-OEV model over
//!   the positive categories;
//! - `nb_ogev` / `poisson_ogev`: negative binomial or Poisson mean-frequency
//!   utilities with count-specific terms, allocated through an ordered GEV
//!   kernel over adjacent pairs.
//!
//! The crate also provides analytic marginal effects, fit statistics, model
//! comparison and a counter-based simulator for recovery studies.

pub mod compare;
pub mod data;
pub mod effects;
pub mod error;
pub mod estimate;
pub mod kernel;
pub mod math;
pub mod model;
pub mod params;
pub mod rng;
pub mod simulate;
pub mod spec;

pub use compare::{run_compare, Comparison, ComparisonRow};
pub use data::{load_dataset, Dataset, Observation};
pub use error::{Error, Result};
pub use estimate::{
    estimate, fit, fit_null, fit_statistics, log_likelihood, FitOptions, FitResult, FitStats,
};
pub use model::{predict_log_pmf, predict_pmf};
pub use params::ParamSet;
pub use simulate::{simulate, Generator, SimulationConfig};
pub use spec::{
    validate_spec, CountTerm, Covariate, CovariateBlock, Family, ModelSpec, Transform,
    ValidatedSpec,
};
