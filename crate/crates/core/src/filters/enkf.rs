use crate::ensemble::{kalman_gain, JointEnsemble, KalmanGain, WeightVector};
use crate::error::{Error, Result};

use super::{Diagnostics, FilterState};

/// `X̃ⁱ = Xⁱ + K̂ (y* − Yⁱ)` with the sample gain of the forecast.
///
/// No perturbation is added to `y*`; the measurement noise already lives in
/// the simulated observations `Yⁱ`.
pub fn enkf_update(j: &JointEnsemble, y_star: &[f64]) -> Result<FilterState> {
    check_obs(j, y_star)?;
    if j.len() < 2 {
        return Err(Error::TooFewMembers {
            required: 2,
            got: j.len(),
        });
    }
    let posterior = match gain_or_zero_innovation(j, y_star)? {
        Some(k) => k.shift(j.states(), j.observations(), y_star),
        None => j.states().clone(),
    };
    let n = j.len();
    Ok(FilterState {
        posterior,
        diagnostics: Diagnostics {
            effective_size: n as f64,
            forecast_size: n,
            weight_entropy: WeightVector::uniform(n).entropy(),
            ..Default::default()
        },
    })
}

pub(super) fn check_obs(j: &JointEnsemble, y_star: &[f64]) -> Result<()> {
    if y_star.len() != j.obs_dim() {
        return Err(Error::DimensionMismatch {
            context: "observation vector",
            expected: j.obs_dim(),
            got: y_star.len(),
        });
    }
    if y_star.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "observation vector".into(),
        });
    }
    Ok(())
}

/// The sample gain, or `None` when every simulated observation equals `y*`
/// exactly: the update is then the identity whatever the gain.
pub(super) fn gain_or_zero_innovation(j: &JointEnsemble, y_star: &[f64]) -> Result<Option<KalmanGain>> {
    let m = j.obs_dim();
    let zero_innovation = j.observations().as_slice().chunks(m.max(1)).all(|y| y == y_star);
    if zero_innovation {
        Ok(None)
    } else {
        kalman_gain(j).map(Some)
    }
}
