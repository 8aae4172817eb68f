//! Trimmed ensemble Kalman update.
//!
//! Forecast members are weighted by `t(y) = exp(−d(y, y*) / λ)`, resampled
//! with those weights, and then shifted with the gain of the untrimmed
//! forecast. Large `λ` reproduces the EnKF, small `λ` approaches the exact
//! posterior at the price of a smaller effective ensemble.

use rand::Rng;

use crate::ensemble::{bootstrap_resample_with, index_digest, JointEnsemble, ResampleScheme, WeightVector};
use crate::error::{Error, Result};

use super::enkf::{check_obs, gain_or_zero_innovation};
use super::{Diagnostics, FilterState};

/// Distance between a simulated observation and the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistanceKind {
    /// `Σ_j |y_j − y*_j| / σ̂_j`.
    #[default]
    NormalizedL1,
    /// `max_j |y_j − y*_j|`, in measurement units.
    MaxAbs,
}

/// How λ is chosen at each update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaRule {
    Fixed(f64),
    /// Search λ so that the effective size hits this target.
    TargetEffectiveSize(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrimConfig {
    pub distance: DistanceKind,
    pub lambda: LambdaRule,
    pub lambda_bounds: (f64, f64),
    /// Relative tolerance on `|n_e − n_e*| / n_e*`.
    pub ne_tolerance: f64,
    pub max_bisect_iters: usize,
    pub resample: ResampleScheme,
    /// Recompute the gain from the trimmed ensemble instead of the forecast.
    pub gain_from_trimmed: bool,
}

impl Default for TrimConfig {
    fn default() -> Self {
        TrimConfig {
            distance: DistanceKind::NormalizedL1,
            lambda: LambdaRule::TargetEffectiveSize(50.0),
            lambda_bounds: (1e-6, 1e6),
            ne_tolerance: 0.05,
            max_bisect_iters: 60,
            resample: ResampleScheme::Multinomial,
            gain_from_trimmed: false,
        }
    }
}

impl TrimConfig {
    pub fn fixed(lambda: f64) -> Self {
        TrimConfig {
            lambda: LambdaRule::Fixed(lambda),
            ..Default::default()
        }
    }

    pub fn targeting(target_ne: f64) -> Self {
        TrimConfig {
            lambda: LambdaRule::TargetEffectiveSize(target_ne),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.lambda_bounds;
        if !(lo > 0.0 && lo < hi) {
            return Err(Error::param("lambda_bounds", "need 0 < lambda_min < lambda_max"));
        }
        if !(self.ne_tolerance > 0.0) {
            return Err(Error::param("ne_tolerance", "must be positive"));
        }
        match self.lambda {
            LambdaRule::Fixed(l) if !(l > 0.0) => Err(Error::param("lambda", "must be positive")),
            LambdaRule::TargetEffectiveSize(t) if !(t >= 1.0) => Err(Error::param("target_ne", "must be at least 1")),
            _ => Ok(()),
        }
    }
}

/// Outcome flags of the λ search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrimFlag {
    /// All distances are identical; weights are uniform for every λ.
    NoTrimPossible,
    /// Even `λ_max` leaves fewer effective members than requested.
    TargetAboveReach,
    /// Even `λ_min` leaves more effective members than requested.
    TargetBelowReach,
    /// The iteration budget ran out before the tolerance was met.
    NotConverged,
}

/// Per-dimension sample standard deviation of the simulated observations.
pub fn observation_scale(y: &nalgebra::DMatrix<f64>) -> Vec<f64> {
    let n = y.ncols();
    if n < 2 {
        return vec![0.0; y.nrows()];
    }
    y.row_iter()
        .map(|row| {
            let mean = row.sum() / n as f64;
            (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
        })
        .collect()
}

/// Distance of every member's observation to `y*`.
///
/// For the normalized-L1 distance, dimensions whose `scale` is zero are left
/// out; the second return value counts them.
pub fn trim_distance(
    y: &nalgebra::DMatrix<f64>,
    y_star: &[f64],
    kind: DistanceKind,
    scale: &[f64],
) -> (Vec<f64>, usize) {
    let m = y.nrows();
    let skipped = match kind {
        DistanceKind::NormalizedL1 => scale.iter().filter(|&&s| !(s > 0.0)).count(),
        DistanceKind::MaxAbs => 0,
    };
    let d = y
        .as_slice()
        .chunks(m.max(1))
        .map(|col| match kind {
            DistanceKind::NormalizedL1 => col
                .iter()
                .zip(y_star)
                .zip(scale)
                .filter(|(_, &s)| s > 0.0)
                .map(|((v, t), s)| (v - t).abs() / s)
                .sum(),
            DistanceKind::MaxAbs => col.iter().zip(y_star).map(|(v, t)| (v - t).abs()).fold(0.0, f64::max),
        })
        .collect();
    (d, skipped)
}

/// `wᵢ ∝ exp(−dᵢ / λ)`, normalized in log space.
pub fn trim_weights(d: &[f64], lambda: f64) -> Result<WeightVector> {
    if !(lambda > 0.0) {
        return Err(Error::param("lambda", "must be positive"));
    }
    let log_w: Vec<f64> = d.iter().map(|v| -v / lambda).collect();
    WeightVector::from_log_weights(&log_w)
}

/// Result of [`adapt_lambda`].
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSearch {
    pub lambda: f64,
    pub weights: WeightVector,
    pub effective_size: f64,
    /// Bisection midpoints evaluated.
    pub iterations: usize,
    pub flag: Option<TrimFlag>,
}

/// Finds λ with `n_e(λ) ≈ target_ne` by bisection on `log₁₀ λ`.
///
/// Relies on `n_e` being non-decreasing in λ.
pub fn adapt_lambda(d: &[f64], target_ne: f64, cfg: &TrimConfig) -> Result<LambdaSearch> {
    cfg.validate()?;
    let n = d.len();
    if n == 0 {
        return Err(Error::EmptyEnsemble);
    }
    if !(target_ne >= 1.0 && target_ne <= n as f64 * (1.0 + 1e-12)) {
        return Err(Error::param(
            "target_ne",
            format!("must lie in [1, n = {n}], got {target_ne}"),
        ));
    }
    let (lo, hi) = cfg.lambda_bounds;
    let eval = |lambda: f64| -> Result<(WeightVector, f64)> {
        let w = trim_weights(d, lambda)?;
        let ne = w.effective_size();
        Ok((w, ne))
    };
    let done = |ne: f64| ((ne - target_ne) / target_ne).abs() <= cfg.ne_tolerance;
    let finish = |lambda, weights: WeightVector, ne, iterations, flag| LambdaSearch {
        lambda,
        weights,
        effective_size: ne,
        iterations,
        flag,
    };

    let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
    let dmax = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if dmax == dmin {
        return Ok(finish(
            hi,
            WeightVector::uniform(n),
            n as f64,
            0,
            Some(TrimFlag::NoTrimPossible),
        ));
    }

    let (w_hi, ne_hi) = eval(hi)?;
    if done(ne_hi) {
        return Ok(finish(hi, w_hi, ne_hi, 0, None));
    }
    if ne_hi < target_ne {
        return Ok(finish(hi, w_hi, ne_hi, 0, Some(TrimFlag::TargetAboveReach)));
    }
    let (w_lo, ne_lo) = eval(lo)?;
    if done(ne_lo) {
        return Ok(finish(lo, w_lo, ne_lo, 0, None));
    }
    if ne_lo > target_ne {
        return Ok(finish(lo, w_lo, ne_lo, 0, Some(TrimFlag::TargetBelowReach)));
    }

    let (mut a, mut b) = (lo.log10(), hi.log10());
    let mut last = None;
    for it in 1..=cfg.max_bisect_iters {
        let mid = 0.5 * (a + b);
        let lambda = 10f64.powf(mid);
        let (w, ne) = eval(lambda)?;
        if done(ne) {
            return Ok(finish(lambda, w, ne, it, None));
        }
        if ne > target_ne {
            b = mid;
        } else {
            a = mid;
        }
        last = Some((lambda, w, ne));
    }
    let (lambda, w, ne) = last.expect("at least one bisection step");
    Ok(finish(
        lambda,
        w,
        ne,
        cfg.max_bisect_iters,
        Some(TrimFlag::NotConverged),
    ))
}

/// One trimmed update; the posterior has as many members as the forecast.
pub fn tenkf_update<R: Rng + ?Sized>(
    j: &JointEnsemble,
    y_star: &[f64],
    cfg: &TrimConfig,
    rng: &mut R,
) -> Result<FilterState> {
    tenkf_update_sized(j, y_star, cfg, j.len(), rng)
}

/// Trimmed update producing `n_out` posterior members, for forecasts that
/// were augmented beyond the nominal ensemble size.
///
/// Steps, in order: gain from the untrimmed forecast; distances and λ;
/// joint bootstrap with the trimming weights; Kalman shift of the trimmed
/// states.
pub fn tenkf_update_sized<R: Rng + ?Sized>(
    j: &JointEnsemble,
    y_star: &[f64],
    cfg: &TrimConfig,
    n_out: usize,
    rng: &mut R,
) -> Result<FilterState> {
    check_obs(j, y_star)?;
    cfg.validate()?;
    let n = j.len();
    if n < 2 {
        return Err(Error::TooFewMembers { required: 2, got: n });
    }
    let gain = if cfg.gain_from_trimmed {
        None
    } else {
        gain_or_zero_innovation(j, y_star)?
    };

    let scale = match cfg.distance {
        DistanceKind::NormalizedL1 => observation_scale(j.observations()),
        DistanceKind::MaxAbs => Vec::new(),
    };
    let (d, skipped) = trim_distance(j.observations(), y_star, cfg.distance, &scale);
    let search = match cfg.lambda {
        LambdaRule::Fixed(lambda) => {
            let weights = trim_weights(&d, lambda)?;
            let ne = weights.effective_size();
            LambdaSearch {
                lambda,
                weights,
                effective_size: ne,
                iterations: 0,
                flag: None,
            }
        }
        LambdaRule::TargetEffectiveSize(target) => adapt_lambda(&d, target.min(n as f64), cfg)?,
    };

    let resampled = bootstrap_resample_with(j, &search.weights, n_out, cfg.resample, rng)?;
    let trimmed = &resampled.ensemble;
    let gain = if cfg.gain_from_trimmed {
        gain_or_zero_innovation(trimmed, y_star)?
    } else {
        gain
    };
    let posterior = match gain {
        Some(k) => k.shift(trimmed.states(), trimmed.observations(), y_star),
        None => trimmed.states().clone(),
    };

    Ok(FilterState {
        posterior,
        diagnostics: Diagnostics {
            lambda: Some(search.lambda),
            effective_size: search.effective_size,
            forecast_size: n,
            near_count: None,
            weight_entropy: search.weights.entropy(),
            resample_digest: index_digest(&resampled.indices),
            flag: search.flag,
            skipped_obs_dims: skipped,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::Ensemble;
    use crate::filters::enkf_update;
    use crate::rng::SeedStream;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn distance_examples() {
        let y = DMatrix::from_row_slice(1, 2, &[1.5, 5.0]);
        let (d, _) = trim_distance(&y, &[1.5], DistanceKind::NormalizedL1, &[2.0]);
        assert_eq!(d[0], 0.0);
        let (d, _) = trim_distance(
            &DMatrix::from_row_slice(1, 1, &[5.0]),
            &[1.0],
            DistanceKind::NormalizedL1,
            &[2.0],
        );
        assert_eq!(d, vec![2.0]);
        let (d, _) = trim_distance(
            &DMatrix::from_column_slice(2, 1, &[1.0, -3.0]),
            &[0.0, 0.0],
            DistanceKind::MaxAbs,
            &[],
        );
        assert_eq!(d, vec![3.0]);
    }

    #[test]
    fn zero_spread_dimension_is_skipped() {
        let y = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 7.0, 7.0, 7.0]);
        let scale = observation_scale(&y);
        assert_eq!(scale[1], 0.0);
        let (d, skipped) = trim_distance(&y, &[2.0, 0.0], DistanceKind::NormalizedL1, &scale);
        assert_eq!(skipped, 1);
        assert_abs_diff_eq!(d[0], 1.0, epsilon = 1e-12);
        assert_eq!(d[1], 0.0);
    }

    #[test]
    fn weight_examples() {
        let w = trim_weights(&[0.7, 0.7, 0.7], 0.3).unwrap();
        assert!(w.as_slice().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        let lambda = 0.8;
        let w = trim_weights(&[0.0, lambda * 2f64.ln()], lambda).unwrap();
        assert_abs_diff_eq!(w.as_slice()[0], 2.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(w.as_slice()[1], 1.0 / 3.0, epsilon = 1e-14);
        let w = trim_weights(&[0.0, 1.0, 5.0, 30.0], 1e12).unwrap();
        assert!(w.as_slice().iter().all(|&v| (v - 0.25).abs() < 1e-9));
        // Far-away members underflow without breaking normalization.
        let w = trim_weights(&[1e6, 1e6 + 1.0], 1e-3).unwrap();
        assert_abs_diff_eq!(w.as_slice()[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn full_target_keeps_upper_bound() {
        let d: Vec<f64> = (0..100).map(|i| i as f64 / 10.0).collect();
        let s = adapt_lambda(&d, 100.0, &TrimConfig::default()).unwrap();
        assert_eq!(s.lambda, 1e6);
        assert!(s.weights.as_slice().iter().all(|&w| (w - 0.01).abs() < 1e-6));
    }

    #[test]
    fn two_member_closed_form() {
        // n_e = 1 / (w² + (1−w)²) = 1.6 ⇒ w = 3/4 ⇒ e^{1/λ} = 3.
        let cfg = TrimConfig {
            ne_tolerance: 1e-12,
            max_bisect_iters: 200,
            ..Default::default()
        };
        let s = adapt_lambda(&[0.0, 1.0], 1.6, &cfg).unwrap();
        assert_abs_diff_eq!(s.lambda, 1.0 / 3f64.ln(), epsilon = 1e-8);
        assert_abs_diff_eq!(s.weights.as_slice()[0], 0.75, epsilon = 1e-9);
        assert_eq!(s.flag, None);
    }

    #[test]
    fn hits_target_on_normal_distances() {
        let mut rng = SeedStream::new(8).rng();
        let d: Vec<f64> = (0..1000).map(|_| rng.sample::<f64, _>(StandardNormal).abs()).collect();
        let s = adapt_lambda(&d, 50.0, &TrimConfig::default()).unwrap();
        assert!((47.5..=52.5).contains(&s.effective_size), "{}", s.effective_size);
        assert_abs_diff_eq!(s.effective_size, s.weights.effective_size(), epsilon = 1e-12);
        assert!(s.iterations <= 60);
    }

    #[test]
    fn identical_distances_flagged() {
        let s = adapt_lambda(&[2.0; 10], 5.0, &TrimConfig::default()).unwrap();
        assert_eq!(s.flag, Some(TrimFlag::NoTrimPossible));
        assert_eq!(s.lambda, 1e6);
        assert_eq!(s.weights, WeightVector::uniform(10));
    }

    #[test]
    fn unreachable_targets_flagged() {
        let cfg = TrimConfig {
            lambda_bounds: (1.0, 2.0),
            ..Default::default()
        };
        let d: Vec<f64> = (0..50).map(|i| i as f64).collect();
        assert_eq!(
            adapt_lambda(&d, 49.0, &cfg).unwrap().flag,
            Some(TrimFlag::TargetAboveReach)
        );
        assert_eq!(
            adapt_lambda(&d, 1.01, &cfg).unwrap().flag,
            Some(TrimFlag::TargetBelowReach)
        );
        assert!(adapt_lambda(&d, 51.0, &cfg).is_err());
    }

    fn scalar_joint(xs: &[f64], ys: &[f64]) -> JointEnsemble {
        JointEnsemble::new(
            Ensemble::from_scalars(xs).unwrap(),
            DMatrix::from_row_slice(1, ys.len(), ys),
        )
        .unwrap()
    }

    #[test]
    fn no_trim_matches_enkf_shift() {
        let xs = [0.0, 1.0, 2.0, 3.5, -1.0];
        let ys = [0.3, 2.0, 4.1, 6.0, -2.2];
        let j = scalar_joint(&xs, &ys);
        let cfg = TrimConfig::fixed(1e12);
        let t = tenkf_update(&j, &[1.0], &cfg, &mut SeedStream::new(4).rng()).unwrap();
        let e = enkf_update(&j, &[1.0]).unwrap();
        // Every trimmed posterior member is one of the EnKF posterior members.
        let pool = e.posterior.component(0);
        for v in t.posterior.component(0) {
            assert!(pool.iter().any(|p| (p - v).abs() < 1e-12));
        }
        // With identical seeds the resampled indices equal a uniform bootstrap.
        let idx = crate::ensemble::resample_indices(
            &WeightVector::uniform(5),
            5,
            ResampleScheme::Multinomial,
            &mut SeedStream::new(4).rng(),
        );
        assert_eq!(t.posterior, e.posterior.select(&idx));
    }

    #[test]
    fn zero_innovation_resamples_prior() {
        let j = scalar_joint(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]);
        let s = tenkf_update(&j, &[5.0], &TrimConfig::targeting(2.0), &mut SeedStream::new(1).rng()).unwrap();
        assert_eq!(s.diagnostics.flag, Some(TrimFlag::NoTrimPossible));
        for v in s.posterior.component(0) {
            assert!([1.0, 2.0, 3.0].contains(&v));
        }
    }

    #[test]
    fn sized_update_returns_requested_members() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 0.01 * x * x).collect();
        let s = tenkf_update_sized(
            &scalar_joint(&xs, &ys),
            &[1.0],
            &TrimConfig::targeting(5.0),
            10,
            &mut SeedStream::new(1).rng(),
        )
        .unwrap();
        assert_eq!(s.posterior.len(), 10);
        assert_eq!(s.diagnostics.forecast_size, 30);
    }

    #[test]
    fn gaussian_samples_agree_with_enkf() {
        let n = 100_000;
        let mut rng = SeedStream::new(21).rng();
        let xs: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| x + 0.5 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let j = scalar_joint(&xs, &ys);
        let y_star = [0.8];
        let e = enkf_update(&j, &y_star).unwrap().posterior.component(0);
        let post_var = 0.25 / 1.25;
        for lambda in [0.05, 0.5, 5.0] {
            let s = tenkf_update(&j, &y_star, &TrimConfig::fixed(lambda), &mut SeedStream::new(2).rng()).unwrap();
            let t = s.posterior.component(0);
            let ne = s.diagnostics.effective_size;
            let me = e.iter().sum::<f64>() / n as f64;
            let mt = t.iter().sum::<f64>() / n as f64;
            let se = (post_var * (1.0 / ne + 2.0 / n as f64)).sqrt();
            assert!((me - mt).abs() < 4.0 * se, "lambda {lambda}: {me} vs {mt}, se {se}");
        }
    }

    proptest! {
        #[test]
        fn effective_size_monotone_in_lambda(
            d in prop::collection::vec(0.0f64..10.0, 2..60),
            l1 in -3.0f64..3.0,
            dl in 0.0f64..2.0,
        ) {
            let a = trim_weights(&d, 10f64.powf(l1)).unwrap().effective_size();
            let b = trim_weights(&d, 10f64.powf(l1 + dl)).unwrap().effective_size();
            prop_assert!(b >= a * (1.0 - 1e-12));
        }
    }
}
