//! Selection of partially observed binary/ordinal level-2 predictors in a
//! two-level random-intercept linear model.
//!
//! The pipeline imputes the missing items with chained equations, selects
//! split-coded item contrasts with an adaptive lasso tuned by the extended
//! BIC on each completed dataset, keeps contrasts selected often enough, and
//! refines the set with Rubin-pooled tests on maximum-likelihood mixed-model
//! fits.

// `!(x > 0.0)` is how the range checks reject NaN along with bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coding;
pub mod config;
pub mod data;
pub mod error;
pub mod glm;
pub mod imputation;
pub(crate) mod linalg;
pub mod mixed_model;
pub mod pipeline;
pub mod pooling;
pub mod regularization;
pub mod report;
pub mod seeds;
pub mod simgen;

pub use error::{Error, Result};
