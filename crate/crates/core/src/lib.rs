//! Ensemble data assimilation: the ensemble Kalman filter (EnKF), the trimmed
//! ensemble Kalman filter (TEnKF) with adaptive trimming and ensemble
//! augmentation, and a bootstrap particle filter.
//!
//! A single update cycle:
//!
//! ```
//! use tenkf::{forecast, enkf_update, Ensemble, SeedStream};
//! use tenkf::models::linear_gaussian_model;
//! use nalgebra::DMatrix;
//!
//! let (dynamics, meas) = linear_gaussian_model(
//!     DMatrix::from_element(1, 1, 1.0),
//!     DMatrix::from_element(1, 1, 0.01),
//!     DMatrix::from_element(1, 1, 1.0),
//!     DMatrix::from_element(1, 1, 0.04),
//! )?;
//! let prior = Ensemble::from_scalars(&[-0.3, 0.1, 0.4, 0.9, 1.2])?;
//! let joint = forecast(&prior, &dynamics, &meas, 0.0, 1.0, &SeedStream::new(7))?;
//! let post = enkf_update(&joint, &[0.5])?;
//! assert_eq!(post.posterior.len(), 5);
//! # Ok::<(), tenkf::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ensemble;
pub mod error;
pub mod filters;
pub mod integrators;
pub mod metrics;
pub mod models;
pub mod oracle;
pub mod rng;

pub use ensemble::{
    bootstrap_resample, cross_covariance, effective_size, kalman_gain, sample_mean, Ensemble, JointEnsemble,
    KalmanGain, ResampleScheme, WeightVector,
};
pub use error::{Error, Result};
pub use filters::{
    adapt_lambda, augment_forecast, enkf_update, forecast, pf_update, run_assimilation, tenkf_update, trim_distance,
    trim_weights, AugmentConfig, Diagnostics, DistanceKind, FilterKind, FilterState, LambdaRule, TrimConfig,
};
pub use rng::SeedStream;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/ensembles.md")]
    mod ensembles {}
    #[doc = include_str!("../../../book/src/enkf.md")]
    mod enkf {}
    #[doc = include_str!("../../../book/src/trimming.md")]
    mod trimming {}
    #[doc = include_str!("../../../book/src/augmentation.md")]
    mod augmentation {}
    #[doc = include_str!("../../../book/src/oracles.md")]
    mod oracles {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
