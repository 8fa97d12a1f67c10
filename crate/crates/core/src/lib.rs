//! Moisture-content prediction for convectively dried fruit slices from
//! process parameters and slice images.
//!
//! The crate covers the whole experiment: a synthetic dataset generator
//! ([`simulator`]), image preprocessing ([`imaging`], [`pipeline`]), the fusion
//! network and its parts ([`models`], [`nn`]), benchmark models
//! ([`baselines`]), the cross-validation harness ([`experiments`]) and the
//! command layer behind the `mcfusion` binary ([`io`]).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the common instantiations.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod config;
pub mod domain;
pub mod error;
pub mod experiments;
pub mod imaging;
pub mod io;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod scalar;
pub mod simulator;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use scalar::Scalar;

/// Fusion network in single precision, used for training runs.
pub type FusionNet32 = models::FusionNet<f32>;
/// Fusion network in double precision, used for gradient checks.
pub type FusionNet64 = models::FusionNet<f64>;
pub type ImageOnlyNet32 = models::ImageOnlyNet<f32>;
pub type Mlp32 = models::Mlp<f32>;
pub type ParallelFusion32 = baselines::ParallelFusion<f32>;
