//! Assimilation algorithms.
//!
//! Every update consumes a [`JointEnsemble`](crate::ensemble::JointEnsemble)
//! produced by [`forecast`] and returns a [`FilterState`].

mod assimilate;
mod augment;
mod enkf;
mod forecast;
mod pf;
mod trim;

pub use assimilate::{
    run_assimilation, AssimilationRun, FilterKind, GaussianInitialConditions, InitialConditions, L63InitialConditions,
    L96InitialConditions, StepRecord, TwinExperiment,
};
pub use augment::{augment_forecast, augmentation_size, count_within, AugmentConfig, Augmented};
pub use enkf::enkf_update;
pub use forecast::{forecast, forecast_from};
pub use pf::{pf_update, pf_update_sized};
pub use trim::{
    adapt_lambda, observation_scale, tenkf_update, tenkf_update_sized, trim_distance, trim_weights, DistanceKind,
    LambdaRule, LambdaSearch, TrimConfig, TrimFlag,
};

use crate::ensemble::Ensemble;

/// Per-update diagnostics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    /// Trimming scale actually used (trimmed updates only).
    pub lambda: Option<f64>,
    /// Effective size of the update weights; `n` for unweighted updates.
    pub effective_size: f64,
    /// Forecast members entering the update, after any augmentation.
    pub forecast_size: usize,
    /// Members within `d_max` of the data, when augmentation ran.
    pub near_count: Option<usize>,
    /// Shannon entropy of the update weights.
    pub weight_entropy: f64,
    /// FNV digest of the resampled indices; zero when nothing was resampled.
    pub resample_digest: u64,
    pub flag: Option<TrimFlag>,
    /// Observation dimensions with zero spread, left out of the distance.
    pub skipped_obs_dims: usize,
}

/// Posterior ensemble plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub posterior: Ensemble,
    pub diagnostics: Diagnostics,
}
