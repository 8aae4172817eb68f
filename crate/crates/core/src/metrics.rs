//! Error and distribution metrics.

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::oracle::DensityGrid;

fn check_truth(e: &Ensemble, truth: &[f64]) -> Result<()> {
    if e.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if truth.len() != e.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "truth state",
            expected: e.state_dim(),
            got: truth.len(),
        });
    }
    Ok(())
}

/// Root-mean-square distance of every member from `truth`, averaged over
/// members and state dimensions.
pub fn ensemble_rmse(e: &Ensemble, truth: &[f64]) -> Result<f64> {
    check_truth(e, truth)?;
    let ss: f64 = e
        .members()
        .as_slice()
        .chunks(truth.len().max(1))
        .flat_map(|x| x.iter().zip(truth).map(|(a, b)| (a - b).powi(2)))
        .sum();
    Ok((ss / e.members().len() as f64).sqrt())
}

/// RMSE of the ensemble mean.
pub fn mean_rmse(e: &Ensemble, truth: &[f64]) -> Result<f64> {
    check_truth(e, truth)?;
    let mean = e.mean()?;
    let ss: f64 = mean.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((ss / truth.len() as f64).sqrt())
}

/// Per-step RMSE values and their times.
#[derive(Debug, Clone, PartialEq)]
pub struct RmseSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl RmseSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch {
                context: "RMSE series",
                expected: times.len(),
                got: values.len(),
            });
        }
        Ok(RmseSeries { times, values })
    }

    pub fn aggregate(&self) -> Result<f64> {
        time_avg_rmse(&self.values)
    }
}

/// `sqrt(mean(e_k²))`.
pub fn time_avg_rmse(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    Ok((values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt())
}

/// A one-dimensional distribution for [`ks_distance`].
#[derive(Debug, Clone, Copy)]
pub enum Dist1d<'a> {
    Sample(&'a [f64]),
    /// Sample points and their normalized weights.
    Weighted(&'a [f64], &'a [f64]),
    Grid(&'a DensityGrid),
}

/// Sorted support points with cumulative probabilities.
struct StepCdf {
    x: Vec<f64>,
    cum: Vec<f64>,
}

impl StepCdf {
    fn new(x: &[f64], w: Option<&[f64]>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if let Some(w) = w {
            if w.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    context: "sample weights",
                    expected: x.len(),
                    got: w.len(),
                });
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "distribution sample".into(),
            });
        }
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
        let total: f64 = w.map_or(x.len() as f64, |w| w.iter().sum());
        let mut xs = Vec::with_capacity(x.len());
        let mut cum = Vec::with_capacity(x.len());
        let mut acc = 0.0;
        for i in idx {
            acc += w.map_or(1.0, |w| w[i]) / total;
            if xs.last() == Some(&x[i]) {
                *cum.last_mut().unwrap() = acc;
            } else {
                xs.push(x[i]);
                cum.push(acc);
            }
        }
        Ok(StepCdf { x: xs, cum })
    }

    /// `F(v)`, right-continuous.
    fn at(&self, v: f64) -> f64 {
        let k = self.x.partition_point(|&p| p <= v);
        if k == 0 {
            0.0
        } else {
            self.cum[k - 1]
        }
    }

    /// `F(v−)`.
    fn before(&self, v: f64) -> f64 {
        let k = self.x.partition_point(|&p| p < v);
        if k == 0 {
            0.0
        } else {
            self.cum[k - 1]
        }
    }
}

enum Cdf<'a> {
    Step(StepCdf),
    Grid(&'a DensityGrid, Vec<f64>),
}

impl Cdf<'_> {
    fn at(&self, v: f64) -> f64 {
        match self {
            Cdf::Step(s) => s.at(v),
            Cdf::Grid(g, c) => g
                .axis()
                .interpolate(c, v)
                .unwrap_or(if v < g.axis().lo { 0.0 } else { 1.0 }),
        }
    }

    fn before(&self, v: f64) -> f64 {
        match self {
            Cdf::Step(s) => s.before(v),
            Cdf::Grid(..) => self.at(v),
        }
    }

    fn knots(&self) -> Vec<f64> {
        match self {
            Cdf::Step(s) => s.x.clone(),
            Cdf::Grid(g, _) => g.axis().nodes(),
        }
    }
}

fn cdf_of(d: Dist1d<'_>) -> Result<Cdf<'_>> {
    Ok(match d {
        Dist1d::Sample(x) => Cdf::Step(StepCdf::new(x, None)?),
        Dist1d::Weighted(x, w) => Cdf::Step(StepCdf::new(x, Some(w))?),
        Dist1d::Grid(g) => Cdf::Grid(g, g.cdf()),
    })
}

/// Kolmogorov–Smirnov distance `sup |F_a − F_b|`.
///
/// Grid CDFs are the cumulative trapezoid rule, linear between nodes.
pub fn ks_distance(a: Dist1d<'_>, b: Dist1d<'_>) -> Result<f64> {
    let (fa, fb) = (cdf_of(a)?, cdf_of(b)?);
    let mut sup: f64 = 0.0;
    for v in fa.knots().into_iter().chain(fb.knots()) {
        sup = sup
            .max((fa.at(v) - fb.at(v)).abs())
            .max((fa.before(v) - fb.before(v)).abs());
    }
    Ok(sup.min(1.0))
}

/// 1-Wasserstein distance `∫ |F_a − F_b| dx` between two samples.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    let (fa, fb) = (StepCdf::new(a, None)?, StepCdf::new(b, None)?);
    let mut knots: Vec<f64> = fa.x.iter().chain(&fb.x).copied().collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    Ok(knots
        .windows(2)
        .map(|w| (fa.at(w[0]) - fb.at(w[0])).abs() * (w[1] - w[0]))
        .sum())
}

/// Quantile with linear interpolation between order statistics
/// (`h = (n − 1) q`).
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::param("quantile", format!("level {q} outside [0, 1]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    Ok(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

/// Quantiles of per-replicate values at each level in `qs`.
pub fn replicate_quantiles(values: &[f64], qs: &[f64]) -> Result<Vec<f64>> {
    qs.iter().map(|&q| quantile(values, q)).collect()
}

pub const DEFAULT_QUANTILES: [f64; 3] = [0.25, 0.5, 0.75];

pub fn median(values: &[f64]) -> Result<f64> {
    quantile(values, 0.5)
}

/// Bin edges and normalized masses.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub masses: Vec<f64>,
    /// Samples outside `[edges[0], edges[last]]`, left out of the masses.
    pub outside: usize,
}

/// Histogram over `bins` equal bins on `[lo, hi]`; the last bin is closed.
pub fn histogram(samples: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Histogram> {
    if !(lo < hi) || bins == 0 {
        return Err(Error::param("histogram", "need lo < hi and at least one bin"));
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    let mut outside = 0;
    for &s in samples {
        if !(lo..=hi).contains(&s) {
            outside += 1;
            continue;
        }
        let b = (((s - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let inside = samples.len() - outside;
    if inside == 0 {
        return Err(Error::ZeroMass("histogram"));
    }
    Ok(Histogram {
        edges: (0..=bins).map(|i| lo + i as f64 * width).collect(),
        masses: counts.iter().map(|&c| c as f64 / inside as f64).collect(),
        outside,
    })
}

/// One-sided sign test for paired values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignTest {
    /// Pairs with `a < b`.
    pub wins: usize,
    /// Pairs that are not ties.
    pub trials: usize,
    /// `P(Bin(trials, ½) ≥ wins)`.
    pub p_value: f64,
}

/// Tests `H₁: a tends to be smaller than b`.
pub fn sign_test_less(a: &[f64], b: &[f64]) -> Result<SignTest> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "paired sign test",
            expected: a.len(),
            got: b.len(),
        });
    }
    let wins = a.iter().zip(b).filter(|(x, y)| x < y).count();
    let trials = a.iter().zip(b).filter(|(x, y)| x != y).count();
    // Upper tail of Bin(trials, ½) in log space.
    let ln_choose = |n: usize, k: usize| -> f64 { (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum() };
    let p_value = (wins..=trials)
        .map(|k| (ln_choose(trials, k) - trials as f64 * std::f64::consts::LN_2).exp())
        .sum::<f64>()
        .min(1.0);
    Ok(SignTest { wins, trials, p_value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::Axis;
    use crate::rng::SeedStream;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn rmse_examples() {
        let e = Ensemble::from_members(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!(ensemble_rmse(&e, &[1.0, 2.0]).unwrap(), 0.0);
        let e = Ensemble::from_scalars(&[5.0]).unwrap();
        assert_eq!(ensemble_rmse(&e, &[2.0]).unwrap(), 3.0);
        let e = Ensemble::from_scalars(&[-1.0, 1.0]).unwrap();
        assert_eq!(ensemble_rmse(&e, &[0.0]).unwrap(), 1.0);
        assert_eq!(mean_rmse(&e, &[0.0]).unwrap(), 0.0);
        assert!(ensemble_rmse(&e, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn time_average_examples() {
        assert_abs_diff_eq!(time_avg_rmse(&[0.7; 5]).unwrap(), 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(time_avg_rmse(&[0.0, 2.0]).unwrap(), 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(time_avg_rmse(&[3.0, 4.0]).unwrap(), 12.5f64.sqrt(), epsilon = 1e-15);
        assert!(time_avg_rmse(&[]).is_err());
        let s = RmseSeries::new(vec![1.0, 2.0], vec![3.0, 4.0]).unwrap();
        assert_abs_diff_eq!(s.aggregate().unwrap(), 12.5f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn ks_examples() {
        let a = [0.3, 0.1, 0.7];
        assert_eq!(ks_distance(Dist1d::Sample(&a), Dist1d::Sample(&a)).unwrap(), 0.0);
        assert_eq!(
            ks_distance(Dist1d::Sample(&[0.0]), Dist1d::Sample(&[1.0])).unwrap(),
            1.0
        );
        let w = [0.5, 0.5];
        let d = ks_distance(Dist1d::Weighted(&[0.0, 1.0], &w), Dist1d::Sample(&[0.0, 0.0, 1.0, 1.0])).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn ks_uniform_sample_vs_grid() {
        let grid = DensityGrid::from_fn(Axis::new(0.0, 1.0, 2001).unwrap(), |_| 1.0).unwrap();
        let mut rng = SeedStream::new(11).rng();
        let xs: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
        let d = ks_distance(Dist1d::Sample(&xs), Dist1d::Grid(&grid)).unwrap();
        assert!(d < 0.01, "{d}");
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(replicate_quantiles(&[2.5], &DEFAULT_QUANTILES).unwrap(), vec![2.5; 3]);
        assert_eq!(median(&[5.0, 1.0, 3.0, 2.0, 4.0]).unwrap(), 3.0);
        assert_abs_diff_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.25).unwrap(), 1.75, epsilon = 1e-15);
    }

    #[test]
    fn histogram_masses_sum_to_one() {
        let h = histogram(&[0.0, 0.5, 1.0, 2.0, -3.0], 0.0, 1.0, 4).unwrap();
        assert_eq!(h.outside, 2);
        assert_abs_diff_eq!(h.masses.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert_eq!(h.edges.len(), 5);
    }

    #[test]
    fn sign_test_values() {
        let a = [1.0; 10];
        let b = [2.0; 10];
        let t = sign_test_less(&a, &b).unwrap();
        assert_eq!((t.wins, t.trials), (10, 10));
        assert_abs_diff_eq!(t.p_value, 0.5f64.powi(10), epsilon = 1e-15);
        // 20 of 30: P(Bin(30, ½) ≥ 20) ≈ 0.0494.
        let a: Vec<f64> = (0..30).map(|i| if i < 20 { 0.0 } else { 2.0 }).collect();
        let t = sign_test_less(&a, &[1.0; 30]).unwrap();
        assert_abs_diff_eq!(t.p_value, 0.049368, epsilon = 1e-6);
    }

    #[test]
    fn wasserstein_shift() {
        let a = [0.0, 1.0, 2.0];
        let b = [0.5, 1.5, 2.5];
        assert_abs_diff_eq!(wasserstein1(&a, &b).unwrap(), 0.5, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn rmse_permutation_invariant(v in prop::collection::vec(-5.0f64..5.0, 12), truth in prop::collection::vec(-5.0f64..5.0, 3)) {
            let members: Vec<Vec<f64>> = v.chunks(3).map(|c| c.to_vec()).collect();
            let e = Ensemble::from_members(&members).unwrap();
            let mut rev = members.clone();
            rev.reverse();
            let rot: Vec<Vec<f64>> = members.iter().map(|m| vec![m[2], m[0], m[1]]).collect();
            let r = ensemble_rmse(&e, &truth).unwrap();
            prop_assert!((ensemble_rmse(&Ensemble::from_members(&rev).unwrap(), &truth).unwrap() - r).abs() < 1e-12);
            let t_rot = [truth[2], truth[0], truth[1]];
            prop_assert!((ensemble_rmse(&Ensemble::from_members(&rot).unwrap(), &t_rot).unwrap() - r).abs() < 1e-12);
        }

        #[test]
        fn ks_symmetric_and_bounded(a in prop::collection::vec(-3.0f64..3.0, 1..50), b in prop::collection::vec(-3.0f64..3.0, 1..50)) {
            let ab = ks_distance(Dist1d::Sample(&a), Dist1d::Sample(&b)).unwrap();
            let ba = ks_distance(Dist1d::Sample(&b), Dist1d::Sample(&a)).unwrap();
            prop_assert!((ab - ba).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn time_average_between_extremes(v in prop::collection::vec(0.0f64..10.0, 1..40)) {
            let m = time_avg_rmse(&v).unwrap();
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(0.0, f64::max);
            prop_assert!(m >= lo - 1e-12 && m <= hi + 1e-12);
        }
    }
}
