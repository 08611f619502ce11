//! Simulation library for counterfactual fairness on invertible structural
//! causal models.
//!
//! The crate is organized around five pieces:
//!
//! - [`scm`]: parametric SCM presets, sampling with ground-truth
//!   counterfactuals, closed-form conditional means, and analytic predictors.
//! - [`cgm`]: counterfactual generating mechanisms (oracle, noise-corrupted
//!   oracles, data-fitted estimators) and exogenous-variable estimators.
//! - [`predictors`]: trainable KNN and MLP models, feature maps, and
//!   counterfactual data augmentation.
//! - [`methods`]: the prediction strategies under comparison (ERM, CFU, CFR,
//!   ECOCF, the plug-in mixture and its variants) plus convex mixing.
//! - [`metrics`] / [`theory`]: evaluation metrics (error, total effect) and
//!   numerical verification of the excess-risk and error-bound results.

#![forbid(unsafe_code)]

pub mod cgm;
pub mod error;
pub mod methods;
pub mod metrics;
pub mod predictors;
pub mod quad;
pub mod rng;
pub mod scm;
pub mod theory;

pub use error::{Error, Result};
