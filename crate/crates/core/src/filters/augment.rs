//! Adaptive ensemble augmentation.
//!
//! When few forecast members land near the data, more members are launched
//! from perturbed copies of the prior before trimming. The forecast grows to
//! `⌊n · min(r_max, n / n_d)⌋`, where `n_d` counts members within `d_max`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::ensemble::{Ensemble, JointEnsemble};
use crate::error::{Error, Result};
use crate::rng::SeedStream;

use super::trim::{observation_scale, trim_distance, DistanceKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub d_max: f64,
    /// Cap on `n_aug / n`.
    pub r_max: f64,
    /// Standard deviation of the perturbation applied to new initial states.
    pub sigma_p: f64,
    pub distance: DistanceKind,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            d_max: 3.0,
            r_max: 3.0,
            sigma_p: 0.4,
            distance: DistanceKind::MaxAbs,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_max > 0.0) {
            return Err(Error::param("d_max", "must be positive"));
        }
        if !(self.r_max >= 1.0) {
            return Err(Error::param("r_max", "must be at least 1"));
        }
        if !(self.sigma_p >= 0.0) {
            return Err(Error::param("sigma_p", "must be non-negative"));
        }
        Ok(())
    }
}

/// Number of distances strictly below `d_max`.
pub fn count_within(d: &[f64], d_max: f64) -> usize {
    d.iter().filter(|&&v| v < d_max).count()
}

/// `⌊n · min(r_max, n / n_d)⌋`; `n_d = 0` takes the cap.
pub fn augmentation_size(n: usize, n_d: usize, r_max: f64) -> usize {
    let ratio = if n_d == 0 {
        r_max
    } else {
        r_max.min(n as f64 / n_d as f64)
    };
    ((n as f64 * ratio).floor() as usize).max(n)
}

#[derive(Debug, Clone)]
pub struct Augmented {
    pub joint: JointEnsemble,
    pub near_count: usize,
    pub forecast_size: usize,
}

/// Grows the forecast `j` when too few members are near `y_star`.
///
/// `pipeline(initial_states, first_member_index)` must forecast new members;
/// the index lets it give them fresh random streams. New initial states are
/// uniform draws from `prior` with `N(0, σ_p²)` added to every component.
pub fn augment_forecast<F>(
    j: &JointEnsemble,
    prior: &Ensemble,
    y_star: &[f64],
    aug: &AugmentConfig,
    pipeline: F,
    seeds: &SeedStream,
) -> Result<Augmented>
where
    F: Fn(&Ensemble, usize) -> Result<JointEnsemble>,
{
    aug.validate()?;
    let n = j.len();
    if n == 0 || prior.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let scale = match aug.distance {
        DistanceKind::NormalizedL1 => observation_scale(j.observations()),
        DistanceKind::MaxAbs => Vec::new(),
    };
    let (d, _) = trim_distance(j.observations(), y_star, aug.distance, &scale);
    let near = count_within(&d, aug.d_max);
    let n_aug = augmentation_size(n, near, aug.r_max);
    if n_aug <= n {
        return Ok(Augmented {
            joint: j.clone(),
            near_count: near,
            forecast_size: n,
        });
    }

    let extra = n_aug - n;
    let dim = prior.state_dim();
    let mut rng = seeds.rng();
    let mut starts = Vec::with_capacity(extra * dim);
    for _ in 0..extra {
        let src = prior.member(rng.random_range(0..prior.len()));
        starts.extend(
            src.iter()
                .map(|v| v + aug.sigma_p * rng.sample::<f64, _>(StandardNormal)),
        );
    }
    let starts = Ensemble::new(nalgebra::DMatrix::from_vec(dim, extra, starts))?;
    let added = pipeline(&starts, n)?;
    if added.len() != extra {
        return Err(Error::DimensionMismatch {
            context: "augmentation pipeline output",
            expected: extra,
            got: added.len(),
        });
    }
    Ok(Augmented {
        joint: j.concat(&added)?,
        near_count: near,
        forecast_size: n_aug,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    #[test]
    fn size_examples() {
        assert_eq!(augmentation_size(100, 50, 3.0), 200);
        assert_eq!(augmentation_size(100, 100, 3.0), 100);
        assert_eq!(augmentation_size(100, 10, 3.0), 300);
        assert_eq!(augmentation_size(100, 0, 3.0), 300);
        assert_eq!(augmentation_size(200, 66, 3.0), 600);
        assert_eq!(augmentation_size(200, 67, 3.0), 597);
    }

    fn identity_pipeline(states: &Ensemble, _first: usize) -> Result<JointEnsemble> {
        let obs = states.members().rows(0, 1).into_owned();
        JointEnsemble::new(states.clone(), obs)
    }

    #[test]
    fn no_augmentation_when_all_near() {
        let prior = Ensemble::from_scalars(&[0.0, 0.5, 1.0]).unwrap();
        let j = identity_pipeline(&prior, 0).unwrap();
        let cfg = AugmentConfig::default();
        let a = augment_forecast(&j, &prior, &[0.5], &cfg, identity_pipeline, &SeedStream::new(1)).unwrap();
        assert_eq!(a.forecast_size, 3);
        assert_eq!(a.joint, j);
    }

    #[test]
    fn augments_with_perturbed_prior_members() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let prior = Ensemble::from_scalars(&xs).unwrap();
        let j = identity_pipeline(&prior, 0).unwrap();
        let cfg = AugmentConfig {
            d_max: 2.5,
            r_max: 3.0,
            sigma_p: 0.0,
            distance: DistanceKind::MaxAbs,
        };
        // Members 0, 1, 2 are within 2.5 of y* = 0.5 → n_aug = ⌊10·min(3, 10/3)⌋ = 30.
        let a = augment_forecast(&j, &prior, &[0.5], &cfg, identity_pipeline, &SeedStream::new(1)).unwrap();
        assert_eq!(a.near_count, 3);
        assert_eq!(a.forecast_size, 30);
        assert_eq!(a.joint.len(), 30);
        for v in a.joint.states().component(0) {
            assert!(xs.contains(&v));
        }
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = AugmentConfig {
            r_max: 0.5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    proptest! {
        #[test]
        fn size_is_bounded(n in 1usize..2000, frac in 0.0f64..=1.0, r_max in 1.0f64..10.0) {
            let n_d = (n as f64 * frac) as usize;
            let s = augmentation_size(n, n_d, r_max);
            prop_assert!(s >= n);
            prop_assert!(s <= (n as f64 * r_max).floor() as usize);
        }

        #[test]
        fn augmented_forecast_is_bounded(ys in prop::collection::vec(-5.0f64..5.0, 2..40), r_max in 1.0f64..4.0) {
            let prior = Ensemble::from_scalars(&ys).unwrap();
            let j = JointEnsemble::new(prior.clone(), DMatrix::from_row_slice(1, ys.len(), &ys)).unwrap();
            let cfg = AugmentConfig { d_max: 1.0, r_max, sigma_p: 0.1, distance: DistanceKind::MaxAbs };
            let a = augment_forecast(&j, &prior, &[0.0], &cfg, identity_pipeline, &SeedStream::new(2)).unwrap();
            prop_assert!(a.joint.len() >= ys.len());
            prop_assert!(a.joint.len() <= (ys.len() as f64 * r_max).floor() as usize);
        }
    }
}
