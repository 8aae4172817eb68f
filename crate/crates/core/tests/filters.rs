use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use tenkf::filters::{GaussianInitialConditions, InitialConditions, L96InitialConditions, TwinExperiment};
use tenkf::integrators::{Integrated, IntegratorConfig};
use tenkf::models::{linear_gaussian_model, Lorenz96, Lorenz96Params, SelectObservation};
use tenkf::oracle::{kalman_filter_exact, kalman_forecast, Gaussian};
use tenkf::{
    enkf_update, forecast, run_assimilation, tenkf_update, trim_weights, AugmentConfig, DistanceKind, Ensemble,
    FilterKind, JointEnsemble, SeedStream, TrimConfig,
};

fn moments(e: &Ensemble) -> (DVector<f64>, DMatrix<f64>) {
    let x = e.members();
    let n = x.ncols() as f64;
    let mean = x.column_mean();
    let centered = x - &mean * DVector::from_element(x.ncols(), 1.0).transpose();
    (mean, &centered * centered.transpose() / (n - 1.0))
}

/// Two-state model observed through its first component.
fn two_state_update(seed: u64, update: impl Fn(&JointEnsemble, &[f64]) -> Ensemble) -> (Ensemble, Gaussian) {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
    let q = DMatrix::from_diagonal_element(2, 2, 0.01);
    let h = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let r = DMatrix::from_element(1, 1, 0.04);
    let (dynamics, meas) = linear_gaussian_model(a.clone(), q.clone(), h.clone(), r.clone()).unwrap();
    let initial = GaussianInitialConditions {
        mean: vec![0.0, 1.0],
        std: vec![1.0, 1.0],
    };
    let seeds = SeedStream::new(seed);
    let prior = initial.prior(&[], 100_000, &mut seeds.child(0).rng()).unwrap();
    let j = forecast(&prior, &dynamics, &meas, 0.0, 1.0, &seeds.child(1)).unwrap();
    let y_star = [0.7];
    let post = update(&j, &y_star);
    let exact_prior = Gaussian::new(DVector::from_vec(vec![0.0, 1.0]), DMatrix::identity(2, 2)).unwrap();
    let exact = kalman_filter_exact(&h, &r, &kalman_forecast(&a, &q, &exact_prior), &y_star).unwrap();
    (post, exact)
}

fn assert_close(post: &Ensemble, exact: &Gaussian, mean_tol: f64, cov_rel_tol: f64) {
    let (m, c) = moments(post);
    for i in 0..2 {
        assert!((m[i] - exact.mean[i]).abs() < mean_tol, "mean {m} vs {}", exact.mean);
        for k in 0..2 {
            let scale = (exact.cov[(i, i)] * exact.cov[(k, k)]).sqrt();
            assert!(
                (c[(i, k)] - exact.cov[(i, k)]).abs() < cov_rel_tol * scale,
                "cov {c} vs {}",
                exact.cov
            );
        }
    }
}

#[test]
fn enkf_matches_the_kalman_filter_in_two_dimensions() {
    let (post, exact) = two_state_update(3, |j, y| enkf_update(j, y).unwrap().posterior);
    assert_close(&post, &exact, 0.015, 0.03);
}

#[test]
fn mildly_trimmed_update_matches_the_kalman_filter() {
    let (post, exact) = two_state_update(4, |j, y| {
        tenkf_update(j, y, &TrimConfig::fixed(1e3), &mut SeedStream::new(9).rng())
            .unwrap()
            .posterior
    });
    assert_close(&post, &exact, 0.02, 0.04);
}

fn l96_experiment(n: usize, augment: Option<AugmentConfig>, seed: u64) -> tenkf::filters::AssimilationRun {
    let model = Lorenz96::new(Lorenz96Params {
        dim: 12,
        forcing: 8.0,
        sigma: 0.0,
        include_damping: true,
    })
    .unwrap();
    let dynamics = Integrated::new(model, IntegratorConfig::rk45(1e-6, 1e-8)).unwrap();
    let meas = SelectObservation::odd_components(12, 0.05).unwrap();
    let initial = L96InitialConditions {
        dim: 12,
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
        initial: &initial,
        n,
        dt_obs: 0.4,
        t_final: 2.0,
        keep_posteriors: true,
    };
    let filter = FilterKind::Tenkf {
        trim: TrimConfig::targeting(10.0),
        augment,
    };
    run_assimilation(&exp, &filter, &SeedStream::new(seed)).unwrap()
}

#[test]
fn augmented_forecasts_respect_the_cap() {
    let aug = AugmentConfig {
        d_max: 0.5,
        r_max: 2.0,
        sigma_p: 0.4,
        distance: DistanceKind::MaxAbs,
    };
    let run = l96_experiment(40, Some(aug), 2);
    assert_eq!(run.steps.len(), 5);
    for s in &run.steps {
        assert!((40..=80).contains(&s.diagnostics.forecast_size), "{:?}", s.diagnostics);
        assert!(s.diagnostics.near_count.is_some());
        assert_eq!(s.posterior.as_ref().unwrap().len(), 40);
        assert!(s.rmse.is_finite());
    }
    assert!(run.steps.iter().any(|s| s.diagnostics.forecast_size > 40));
}

#[test]
fn assimilation_is_reproducible_from_the_seed() {
    let a = l96_experiment(30, None, 7);
    let b = l96_experiment(30, None, 7);
    let c = l96_experiment(30, None, 8);
    assert_eq!(a, b);
    assert_ne!(a.rmse_series(), c.rmse_series());
}

fn joint_ensembles() -> impl Strategy<Value = (JointEnsemble, Vec<f64>)> {
    (2usize..4, 1usize..3, 5usize..40).prop_flat_map(|(dim, obs, n)| {
        (
            prop::collection::vec(-5.0f64..5.0, dim * n),
            prop::collection::vec(-5.0f64..5.0, obs * n),
            prop::collection::vec(-5.0f64..5.0, obs),
        )
            .prop_map(move |(x, y, ys)| {
                let states = Ensemble::new(DMatrix::from_vec(dim, n, x)).unwrap();
                (JointEnsemble::new(states, DMatrix::from_vec(obs, n, y)).unwrap(), ys)
            })
    })
}

proptest! {
    #[test]
    fn trimmed_updates_keep_size_and_stay_finite((j, ys) in joint_ensembles(), lambda in 0.01f64..100.0, seed in any::<u64>()) {
        let out = tenkf_update(&j, &ys, &TrimConfig::fixed(lambda), &mut SeedStream::new(seed).rng()).unwrap();
        prop_assert_eq!(out.posterior.len(), j.len());
        prop_assert!(out.posterior.members().iter().all(|v| v.is_finite()));
        let ne = out.diagnostics.effective_size;
        prop_assert!(ne >= 1.0 - 1e-9 && ne <= j.len() as f64 + 1e-9);
    }

    #[test]
    fn trimming_weights_sum_to_one(d in prop::collection::vec(0.0f64..50.0, 1..200), lambda in 1e-3f64..1e3) {
        let w = trim_weights(&d, lambda).unwrap();
        let total: f64 = w.as_slice().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(w.as_slice().iter().all(|v| *v >= 0.0));
    }
}
