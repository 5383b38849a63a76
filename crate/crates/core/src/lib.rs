//! Sparse neural Cox proportional-hazards models for interval-censored
//! survival data.
//!
//! The crate provides:
//!
//! - survival primitives and the interval-censored log-likelihood
//!   ([`survival`]),
//! - an isotonic profile step for the baseline cumulative hazard built on
//!   weighted pool-adjacent-violators ([`isotonic`]),
//! - a small residual risk network `r(z) = theta'z + g(z)` trained by
//!   full-batch gradient steps ([`risknet`]),
//! - a hierarchical sparsity proximal operator that ties first-layer network
//!   weights to the linear coefficients ([`hierprox`]),
//! - the alternating trainer and a warm-started regularization path
//!   ([`trainer`]),
//! - evaluation metrics: censoring Kaplan-Meier, inverse-probability-of-
//!   censoring-weighted Brier score and its integral, hazard recovery error,
//!   risk correlation and support recovery ([`metrics`]),
//! - synthetic study generation with a Gompertz baseline and an
//!   examination-schedule censoring scheme ([`simgen`]),
//! - versioned model persistence ([`persist`]).
//!
//! With the default `parallel` feature, per-sample and per-replicate loops
//! run on rayon; results are bitwise identical to the sequential build
//! because every reduction is performed in a fixed order.

pub mod error;
pub mod hierprox;
pub mod isotonic;
pub mod mat;
pub mod metrics;
pub(crate) mod par;
pub mod persist;
pub mod risknet;
pub mod simgen;
pub mod stats;
pub mod survival;
pub mod trainer;

pub use error::{Error, Result};
