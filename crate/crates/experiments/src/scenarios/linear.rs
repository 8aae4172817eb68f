use nalgebra::DMatrix;
use tenkf::filters::{GaussianInitialConditions, TwinExperiment};
use tenkf::models::linear_gaussian_model;
use tenkf::oracle::{kalman_filter_exact, kalman_forecast, Gaussian};
use tenkf::{run_assimilation, FilterKind, SeedStream, TrimConfig};

use super::{ctx, lambda_label, replicates};
use crate::config::LinearConfig;
use crate::output::{Check, ScenarioOutput, Table};

struct Row {
    filter: &'static str,
    lambda: Option<f64>,
    step: usize,
    mean: f64,
    var: f64,
    kalman_mean: f64,
    kalman_var: f64,
    effective_size: f64,
}

impl Row {
    /// Monte Carlo standard errors combine the forecast sample and the
    /// effective sample of the update weights.
    fn z_scores(&self, n: usize) -> (f64, f64) {
        let s = 1.0 / n as f64 + 1.0 / self.effective_size;
        let z_mean = (self.mean - self.kalman_mean) / (self.kalman_var * s).sqrt();
        let z_var = (self.var - self.kalman_var) / (self.kalman_var * (2.0 * s).sqrt());
        (z_mean, z_var)
    }
}

fn filters(c: &LinearConfig) -> Vec<(FilterKind, Option<f64>)> {
    let mut f = vec![(FilterKind::Enkf, None)];
    for &l in &c.lambdas {
        f.push((
            FilterKind::Tenkf {
                trim: TrimConfig::fixed(l),
                augment: None,
            },
            Some(l),
        ));
    }
    f.push((FilterKind::Pf, None));
    f
}

fn replicate(c: &LinearConfig, seeds: &SeedStream) -> Result<Vec<Row>, (String, tenkf::Error)> {
    let m1 = |v: f64| DMatrix::from_element(1, 1, v);
    let (dynamics, meas) = ctx(linear_gaussian_model(m1(c.a), m1(c.q), m1(c.h), m1(c.r)), || {
        "model".into()
    })?;
    let initial = GaussianInitialConditions {
        mean: vec![c.prior_mean],
        std: vec![c.prior_var.sqrt()],
    };
    let exp = TwinExperiment {
        dynamics: &dynamics,
        meas: &meas,
        initial: &initial,
        n: c.n,
        dt_obs: 1.0,
        t_final: c.steps as f64,
        keep_posteriors: true,
    };
    let mut rows = Vec::new();
    for (kind, lambda) in filters(c) {
        let label = || {
            format!(
                "{}{}",
                kind.name(),
                lambda.map_or(String::new(), |l| format!(" lambda={l}"))
            )
        };
        let run = ctx(run_assimilation(&exp, &kind, seeds), label)?;
        let mut exact = Gaussian::scalar(c.prior_mean, c.prior_var);
        for s in &run.steps {
            let fc = kalman_forecast(dynamics.a(), dynamics.q(), &exact);
            exact = ctx(
                kalman_filter_exact(meas.h_matrix(), meas.r(), &fc, &s.observation),
                label,
            )?;
            let post = s.posterior.as_ref().expect("posteriors kept").component(0);
            let n = post.len() as f64;
            let mean = post.iter().sum::<f64>() / n;
            let var = post.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            rows.push(Row {
                filter: run.filter,
                lambda,
                step: s.step,
                mean,
                var,
                kalman_mean: exact.mean[0],
                kalman_var: exact.cov[(0, 0)],
                effective_size: s.diagnostics.effective_size,
            });
        }
    }
    Ok(rows)
}

pub fn run_linear(c: &LinearConfig, master: &SeedStream, count: usize) -> ScenarioOutput {
    let (results, failures) = replicates(master, count, |_, seeds| replicate(c, seeds));
    let mut table = Table::new(
        "moments",
        &[
            "replicate",
            "filter",
            "lambda",
            "step",
            "mean",
            "var",
            "kalman_mean",
            "kalman_var",
            "effective_size",
            "z_mean",
            "z_var",
        ],
    );
    let mut worst: Vec<(String, f64)> = Vec::new();
    for (m, rows) in &results {
        for r in rows {
            let (zm, zv) = r.z_scores(c.n);
            table.push(vec![
                (*m).into(),
                r.filter.into(),
                r.lambda.into(),
                r.step.into(),
                r.mean.into(),
                r.var.into(),
                r.kalman_mean.into(),
                r.kalman_var.into(),
                r.effective_size.into(),
                zm.into(),
                zv.into(),
            ]);
            let key = match r.lambda {
                Some(l) => format!("{} lambda={}", r.filter, lambda_label(l)),
                None => r.filter.to_string(),
            };
            let z = zm.abs().max(zv.abs());
            match worst.iter_mut().find(|(k, _)| *k == key) {
                Some(w) => w.1 = w.1.max(z),
                None => worst.push((key, z)),
            }
        }
    }
    let checks = worst
        .into_iter()
        .map(|(k, z)| Check::new(format!("{k}: max |z| against the Kalman filter"), z, "<=", c.z_max))
        .collect();
    ScenarioOutput {
        tables: vec![table],
        checks,
        failures,
    }
}
