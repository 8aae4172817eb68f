use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::ensemble::{Ensemble, JointEnsemble};
use crate::error::{Error, Result};
use crate::models::{MeasModel, Propagator};
use crate::rng::SeedStream;

/// Propagates every member from `t0` to `t0 + horizon` and observes it.
///
/// Member `i` draws all of its model and measurement noise from
/// `seeds.child(i)`, so the output does not depend on thread scheduling.
pub fn forecast(
    prior: &Ensemble,
    dynamics: &dyn Propagator,
    meas: &dyn MeasModel,
    t0: f64,
    horizon: f64,
    seeds: &SeedStream,
) -> Result<JointEnsemble> {
    if prior.len() < 2 {
        return Err(Error::TooFewMembers {
            required: 2,
            got: prior.len(),
        });
    }
    forecast_from(prior, dynamics, meas, t0, horizon, seeds, 0)
}

/// As [`forecast`], numbering member streams from `first_index`; used when
/// appending members to an existing forecast.
pub fn forecast_from(
    prior: &Ensemble,
    dynamics: &dyn Propagator,
    meas: &dyn MeasModel,
    t0: f64,
    horizon: f64,
    seeds: &SeedStream,
    first_index: usize,
) -> Result<JointEnsemble> {
    let dim = prior.state_dim();
    if dynamics.state_dim() != dim {
        return Err(Error::DimensionMismatch {
            context: "forecast model state dimension",
            expected: dim,
            got: dynamics.state_dim(),
        });
    }
    let m = meas.obs_dim();
    let n = prior.len();
    let mut states = prior.members().as_slice().to_vec();
    let mut obs = vec![0.0; m * n];
    states
        .par_chunks_mut(dim.max(1))
        .zip(obs.par_chunks_mut(m.max(1)))
        .enumerate()
        .try_for_each(|(i, (x, y))| {
            let mut rng = seeds.child((first_index + i) as u64).rng();
            dynamics
                .propagate(x, t0, t0 + horizon, &mut rng)
                .map_err(|e| e.for_member(first_index + i))?;
            meas.observe(x, &mut rng, y);
            Ok(())
        })?;
    let states = Ensemble::new(DMatrix::from_vec(dim, n, states))?;
    JointEnsemble::new(states, DMatrix::from_vec(m, n, obs))
}
