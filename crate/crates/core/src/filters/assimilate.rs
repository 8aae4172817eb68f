//! Twin experiments: a truth trajectory, noisy observations of it, and a
//! filter cycling through forecast and update.

use nalgebra::DMatrix;
use rand::RngCore;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::metrics::{ensemble_rmse, mean_rmse};
use crate::models::{sample_diag_gaussian, MeasModel, Propagator};
use crate::rng::SeedStream;

use super::augment::{augment_forecast, AugmentConfig};
use super::enkf::enkf_update;
use super::forecast::{forecast, forecast_from};
use super::pf::pf_update;
use super::trim::{tenkf_update_sized, TrimConfig};
use super::Diagnostics;

/// Which update to run at each observation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterKind {
    Enkf,
    Tenkf {
        trim: TrimConfig,
        augment: Option<AugmentConfig>,
    },
    Pf,
}

impl FilterKind {
    pub fn name(&self) -> &'static str {
        match self {
            FilterKind::Enkf => "enkf",
            FilterKind::Tenkf { augment: None, .. } => "tenkf",
            FilterKind::Tenkf { augment: Some(_), .. } => "tenkf-aug",
            FilterKind::Pf => "pf",
        }
    }
}

/// How the truth and the prior ensemble are drawn at `t = 0`.
pub trait InitialConditions: Send + Sync {
    fn state_dim(&self) -> usize;

    fn truth(&self, rng: &mut dyn RngCore) -> Vec<f64>;

    /// Prior ensemble of `n` members; `y0` is the observation of the truth at `t = 0`.
    fn prior(&self, y0: &[f64], n: usize, rng: &mut dyn RngCore) -> Result<Ensemble>;
}

/// Truth and prior members drawn from the same diagonal Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianInitialConditions {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl InitialConditions for GaussianInitialConditions {
    fn state_dim(&self) -> usize {
        self.mean.len()
    }

    fn truth(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut x = vec![0.0; self.mean.len()];
        sample_diag_gaussian(&self.mean, &self.std, rng, &mut x);
        x
    }

    fn prior(&self, _y0: &[f64], n: usize, rng: &mut dyn RngCore) -> Result<Ensemble> {
        let dim = self.mean.len();
        let mut data = vec![0.0; dim * n];
        for x in data.chunks_mut(dim.max(1)) {
            sample_diag_gaussian(&self.mean, &self.std, rng, x);
        }
        Ensemble::new(DMatrix::from_vec(dim, n, data))
    }
}

/// Lorenz-63 setup: independent Gaussians around `center`, with the prior of
/// the observed component centered on the `t = 0` observation.
#[derive(Debug, Clone, PartialEq)]
pub struct L63InitialConditions {
    /// Truth center; the observed entry only affects the truth.
    pub center: [f64; 3],
    pub std: [f64; 3],
    /// Index of the observed component.
    pub observed: usize,
}

impl InitialConditions for L63InitialConditions {
    fn state_dim(&self) -> usize {
        3
    }

    fn truth(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut x = vec![0.0; 3];
        sample_diag_gaussian(&self.center, &self.std, rng, &mut x);
        x
    }

    fn prior(&self, y0: &[f64], n: usize, rng: &mut dyn RngCore) -> Result<Ensemble> {
        if y0.len() != 1 {
            return Err(Error::DimensionMismatch {
                context: "Lorenz-63 initial observation",
                expected: 1,
                got: y0.len(),
            });
        }
        let mut mean = self.center;
        mean[self.observed] = y0[0];
        let mut data = vec![0.0; 3 * n];
        for x in data.chunks_mut(3) {
            sample_diag_gaussian(&mean, &self.std, rng, x);
        }
        Ensemble::new(DMatrix::from_vec(3, n, data))
    }
}

/// Lorenz-96 setup. Truth and unobserved member components are
/// `N(μ₀ + μ₁ z, σ₀²)`; observed member components are `N(y₀, τ²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct L96InitialConditions {
    pub dim: usize,
    pub mu0: f64,
    pub mu1: f64,
    pub sigma0: f64,
    pub tau: f64,
    /// Experiment-wide standard normal offset.
    pub z: f64,
    /// Observed state indices, in observation order.
    pub observed: Vec<usize>,
}

impl L96InitialConditions {
    fn center(&self) -> f64 {
        self.mu0 + self.mu1 * self.z
    }
}

impl InitialConditions for L96InitialConditions {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn truth(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        sample_diag_gaussian(
            &vec![self.center(); self.dim],
            &vec![self.sigma0; self.dim],
            rng,
            &mut x,
        );
        x
    }

    fn prior(&self, y0: &[f64], n: usize, rng: &mut dyn RngCore) -> Result<Ensemble> {
        if y0.len() != self.observed.len() {
            return Err(Error::DimensionMismatch {
                context: "Lorenz-96 initial observation",
                expected: self.observed.len(),
                got: y0.len(),
            });
        }
        let mut mean = vec![self.center(); self.dim];
        let mut std = vec![self.sigma0; self.dim];
        for (&i, &y) in self.observed.iter().zip(y0) {
            mean[i] = y;
            std[i] = self.tau;
        }
        let mut data = vec![0.0; self.dim * n];
        for x in data.chunks_mut(self.dim) {
            sample_diag_gaussian(&mean, &std, rng, x);
        }
        Ensemble::new(DMatrix::from_vec(self.dim, n, data))
    }
}

/// A complete twin-experiment description.
#[derive(Clone, Copy)]
pub struct TwinExperiment<'a> {
    pub dynamics: &'a dyn Propagator,
    pub meas: &'a dyn MeasModel,
    pub initial: &'a dyn InitialConditions,
    /// Nominal ensemble size.
    pub n: usize,
    pub dt_obs: f64,
    pub t_final: f64,
    /// Keep every posterior ensemble, not only the last.
    pub keep_posteriors: bool,
}

impl TwinExperiment<'_> {
    /// `⌊t_f / Δt_obs⌋`, tolerant to rounding in the ratio.
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt_obs + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub time: f64,
    pub truth: Vec<f64>,
    pub observation: Vec<f64>,
    pub diagnostics: Diagnostics,
    /// RMSE over all posterior members.
    pub rmse: f64,
    /// RMSE of the posterior mean.
    pub mean_rmse: f64,
    pub posterior: Option<Ensemble>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssimilationRun {
    pub filter: &'static str,
    pub initial_truth: Vec<f64>,
    pub prior: Ensemble,
    pub steps: Vec<StepRecord>,
    pub final_posterior: Ensemble,
}

impl AssimilationRun {
    pub fn rmse_series(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.rmse).collect()
    }
}

/// Runs one replicate.
///
/// Streams are derived from `seeds` by role: truth (0), observations (1),
/// prior (2), forecast (3), update (4), augmentation (5), each further split
/// by step. Filters run with the same `seeds` therefore see the same truth,
/// observations, prior and forecast noise.
pub fn run_assimilation(exp: &TwinExperiment<'_>, filter: &FilterKind, seeds: &SeedStream) -> Result<AssimilationRun> {
    let dim = exp.initial.state_dim();
    if exp.dynamics.state_dim() != dim {
        return Err(Error::DimensionMismatch {
            context: "initial conditions vs dynamics",
            expected: exp.dynamics.state_dim(),
            got: dim,
        });
    }
    if !(exp.dt_obs > 0.0) {
        return Err(Error::param("dt_obs", "must be positive"));
    }
    if !(exp.t_final >= 0.0) {
        return Err(Error::param("t_final", "must be non-negative"));
    }
    if exp.n < 2 {
        return Err(Error::TooFewMembers {
            required: 2,
            got: exp.n,
        });
    }
    let truth_seeds = seeds.child(0);
    let obs_seeds = seeds.child(1);
    let fc_seeds = seeds.child(3);
    let up_seeds = seeds.child(4);
    let aug_seeds = seeds.child(5);
    let m = exp.meas.obs_dim();

    let mut truth = exp.initial.truth(&mut truth_seeds.child(0).rng());
    let initial_truth = truth.clone();
    let mut y0 = vec![0.0; m];
    exp.meas.observe(&truth, &mut obs_seeds.child(0).rng(), &mut y0);
    let prior = exp.initial.prior(&y0, exp.n, &mut seeds.child(2).rng())?;

    let mut ens = prior.clone();
    let mut steps = Vec::with_capacity(exp.steps());
    for k in 1..=exp.steps() {
        let t0 = (k - 1) as f64 * exp.dt_obs;
        let t1 = k as f64 * exp.dt_obs;
        exp.dynamics
            .propagate(&mut truth, t0, t1, &mut truth_seeds.child(k as u64).rng())
            .map_err(|e| e.at_step(k))?;
        let mut y_star = vec![0.0; m];
        exp.meas
            .observe(&truth, &mut obs_seeds.child(k as u64).rng(), &mut y_star);

        let step_fc = fc_seeds.child(k as u64);
        let update = || -> Result<_> {
            let j = forecast(&ens, exp.dynamics, exp.meas, t0, exp.dt_obs, &step_fc)?;
            let mut rng = up_seeds.child(k as u64).rng();
            match filter {
                FilterKind::Enkf => enkf_update(&j, &y_star),
                FilterKind::Pf => pf_update(&j, &y_star, exp.meas, &mut rng),
                FilterKind::Tenkf { trim, augment: None } => tenkf_update_sized(&j, &y_star, trim, exp.n, &mut rng),
                FilterKind::Tenkf {
                    trim,
                    augment: Some(aug),
                } => {
                    let grown = augment_forecast(
                        &j,
                        &ens,
                        &y_star,
                        aug,
                        |starts, first| forecast_from(starts, exp.dynamics, exp.meas, t0, exp.dt_obs, &step_fc, first),
                        &aug_seeds.child(k as u64),
                    )?;
                    let mut state = tenkf_update_sized(&grown.joint, &y_star, trim, exp.n, &mut rng)?;
                    state.diagnostics.near_count = Some(grown.near_count);
                    Ok(state)
                }
            }
        };
        let state = update().map_err(|e| e.at_step(k))?;
        ens = state.posterior;
        steps.push(StepRecord {
            step: k,
            time: t1,
            rmse: ensemble_rmse(&ens, &truth)?,
            mean_rmse: mean_rmse(&ens, &truth)?,
            truth: truth.clone(),
            observation: y_star,
            diagnostics: state.diagnostics,
            posterior: exp.keep_posteriors.then(|| ens.clone()),
        });
    }
    Ok(AssimilationRun {
        filter: filter.name(),
        initial_truth,
        prior,
        steps,
        final_posterior: ens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrators::{Integrated, IntegratorConfig};
    use crate::models::{linear_gaussian_model, Lorenz96, Lorenz96Params, SelectObservation};

    fn scalar_identity() -> (crate::models::LinearGaussianDynamics, SelectObservation) {
        let (d, _) = linear_gaussian_model(
            DMatrix::identity(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        (d, SelectObservation::new(vec![0], 0.0).unwrap())
    }

    #[test]
    fn short_horizon_has_no_steps() {
        let (d, m) = scalar_identity();
        let ic = GaussianInitialConditions {
            mean: vec![0.0],
            std: vec![1.0],
        };
        let exp = TwinExperiment {
            dynamics: &d,
            meas: &m,
            initial: &ic,
            n: 10,
            dt_obs: 1.0,
            t_final: 0.5,
            keep_posteriors: false,
        };
        let run = run_assimilation(&exp, &FilterKind::Enkf, &SeedStream::new(1)).unwrap();
        assert!(run.steps.is_empty());
        assert_eq!(run.final_posterior, run.prior);
    }

    #[test]
    fn exact_observations_contract_toward_truth() {
        let (d, m) = scalar_identity();
        let ic = GaussianInitialConditions {
            mean: vec![0.0],
            std: vec![1.0],
        };
        let exp = TwinExperiment {
            dynamics: &d,
            meas: &m,
            initial: &ic,
            n: 50,
            dt_obs: 1.0,
            t_final: 4.0,
            keep_posteriors: false,
        };
        let run = run_assimilation(&exp, &FilterKind::Enkf, &SeedStream::new(3)).unwrap();
        assert_eq!(run.steps.len(), 4);
        let prior_rmse = ensemble_rmse(&run.prior, &run.initial_truth).unwrap();
        let mut last = prior_rmse;
        for s in &run.steps {
            assert!(s.rmse <= last + 1e-12, "{} > {last}", s.rmse);
            last = s.rmse;
        }
        assert!(last < 1e-6 * prior_rmse.max(1.0));
    }

    #[test]
    fn reruns_are_identical() {
        let model = Lorenz96::new(Lorenz96Params {
            dim: 8,
            ..Default::default()
        })
        .unwrap();
        let dynamics = Integrated::new(model, IntegratorConfig::heun(0.01)).unwrap();
        let meas = SelectObservation::odd_components(8, 0.05).unwrap();
        let ic = L96InitialConditions {
            dim: 8,
            mu0: 1.0,
            mu1: 0.1,
            sigma0: 0.01,
            tau: 0.05,
            z: 0.3,
            observed: meas.indices().to_vec(),
        };
        let exp = TwinExperiment {
            dynamics: &dynamics,
            meas: &meas,
            initial: &ic,
            n: 40,
            dt_obs: 0.3,
            t_final: 1.2,
            keep_posteriors: true,
        };
        let filter = FilterKind::Tenkf {
            trim: TrimConfig::targeting(10.0),
            augment: Some(AugmentConfig::default()),
        };
        let a = run_assimilation(&exp, &filter, &SeedStream::new(9)).unwrap();
        let b = run_assimilation(&exp, &filter, &SeedStream::new(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.steps.len(), 4);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| run_assimilation(&exp, &filter, &SeedStream::new(9)).unwrap());
        assert_eq!(a, c);
    }

    #[test]
    fn filters_share_truth_and_prior() {
        let (d, m) = scalar_identity();
        let ic = GaussianInitialConditions {
            mean: vec![0.0],
            std: vec![1.0],
        };
        let exp = TwinExperiment {
            dynamics: &d,
            meas: &m,
            initial: &ic,
            n: 20,
            dt_obs: 1.0,
            t_final: 2.0,
            keep_posteriors: false,
        };
        let a = run_assimilation(&exp, &FilterKind::Enkf, &SeedStream::new(5)).unwrap();
        let b = run_assimilation(
            &exp,
            &FilterKind::Tenkf {
                trim: TrimConfig::targeting(5.0),
                augment: None,
            },
            &SeedStream::new(5),
        )
        .unwrap();
        assert_eq!(a.prior, b.prior);
        assert_eq!(a.steps[1].truth, b.steps[1].truth);
        assert_eq!(a.steps[1].observation, b.steps[1].observation);
    }
}
