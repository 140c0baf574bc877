//! GTDL and GTDL gamma-frailty regression for right-censored reliability data.
//!
//! The GTDL model has hazard `lambda * logistic(alpha t + x'beta)` with a
//! regression on the time effect (`alpha = x*'alpha`, identity link), which
//! makes it non-proportional-hazards by construction and defective (cure
//! fraction) when the time effect is negative. The frailty variant mixes a
//! multiplicative Gamma(1/theta, 1/theta) random effect into the hazard to
//! absorb unobserved heterogeneity.
//!
//! Modules:
//! - [`data`]: right-censored datasets with two covariate blocks
//! - [`model`]: hazard / reliability / density / cure fraction / log-likelihoods
//! - [`estimate`]: maximum likelihood, observed information, Wald CIs, LR tests
//! - [`diagnostics`]: randomized quantile residuals, Nelson-Aalen curves,
//!   case-deletion influence (GD, LD, RC)
//! - [`selection`]: two-step stepwise covariate selection and the boundary
//!   test for heterogeneity
//! - [`simulation`]: samplers, censoring calibration, Monte Carlo studies

pub mod data;
pub mod diagnostics;
mod error;
pub mod estimate;
pub mod model;
pub mod num;
pub mod numdiff;
mod optim;
pub mod selection;
pub mod simulation;

pub use data::{DesignMatrix, SurvivalDataset};
pub use error::{Error, Result};
pub use estimate::{fit, FitOptions, FitResult};
pub use model::{LinearPredictors, ModelKind, ParamVector};
