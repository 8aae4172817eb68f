use rand::Rng;

use crate::ensemble::{bootstrap_resample_with, index_digest, JointEnsemble, ResampleScheme, WeightVector};
use crate::error::{Error, Result};
use crate::models::MeasModel;

use super::enkf::check_obs;
use super::{Diagnostics, FilterState};

/// Bootstrap particle filter update: likelihood weights, then multinomial
/// resampling of the forecast states. No Kalman shift.
pub fn pf_update<R: Rng + ?Sized>(
    j: &JointEnsemble,
    y_star: &[f64],
    meas: &dyn MeasModel,
    rng: &mut R,
) -> Result<FilterState> {
    pf_update_sized(j, y_star, meas, j.len(), rng)
}

pub fn pf_update_sized<R: Rng + ?Sized>(
    j: &JointEnsemble,
    y_star: &[f64],
    meas: &dyn MeasModel,
    n_out: usize,
    rng: &mut R,
) -> Result<FilterState> {
    check_obs(j, y_star)?;
    if j.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let states = j.states();
    let log_w = (0..j.len())
        .map(|i| meas.log_likelihood(states.member(i), y_star))
        .collect::<Result<Vec<_>>>()?;
    let weights = WeightVector::from_log_weights(&log_w).map_err(|_| Error::FilterDegeneracy)?;
    let resampled = bootstrap_resample_with(j, &weights, n_out, ResampleScheme::Multinomial, rng)?;
    Ok(FilterState {
        posterior: resampled.ensemble.states().clone(),
        diagnostics: Diagnostics {
            effective_size: weights.effective_size(),
            forecast_size: j.len(),
            weight_entropy: weights.entropy(),
            resample_digest: index_digest(&resampled.indices),
            ..Default::default()
        },
    })
}
