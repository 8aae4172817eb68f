use nalgebra::DMatrix;
use tenkf::metrics::{ks_distance, Dist1d};
use tenkf::models::LinearObservation;
use tenkf::oracle::{bayes_posterior, enkf_limit_pdf, tenkf_limit_pdf, BimodalToy, DensityGrid};
use tenkf::{pf_update, tenkf_update, Ensemble, JointEnsemble, SeedStream, TrimConfig};

use super::{ctx, lambda_label, replicates};
use crate::config::BimodalConfig;
use crate::output::{Check, ScenarioOutput, Table};

/// Tolerances for the limit-density and sampling comparisons.
pub const KS_LARGE_LAMBDA: f64 = 1e-4;
pub const KS_SMALL_LAMBDA: f64 = 0.02;
pub const KS_TENKF_SAMPLE: f64 = 0.03;
pub const KS_PF_SAMPLE: f64 = 0.02;

fn toy(c: &BimodalConfig) -> BimodalToy {
    BimodalToy {
        center: c.center,
        mode_var: c.mode_var,
        noise_var: c.noise_var,
        y_star: c.y_star,
    }
}

struct Samples {
    tenkf: Vec<f64>,
    pf: Vec<f64>,
    tenkf_effective_size: f64,
    pf_effective_size: f64,
}

fn sample(c: &BimodalConfig, seeds: &SeedStream) -> tenkf::Result<Samples> {
    let t = toy(c);
    let (xs, ys) = t.sample(c.n, &mut seeds.child(0).rng());
    let j = JointEnsemble::new(Ensemble::from_scalars(&xs)?, DMatrix::from_row_slice(1, c.n, &ys))?;
    let trimmed = tenkf_update(
        &j,
        &[c.y_star],
        &TrimConfig::fixed(c.sample_lambda),
        &mut seeds.child(1).rng(),
    )?;
    let meas = LinearObservation::new(
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, c.noise_var),
    )?;
    let pf = pf_update(&j, &[c.y_star], &meas, &mut seeds.child(2).rng())?;
    Ok(Samples {
        tenkf: trimmed.posterior.component(0),
        pf: pf.posterior.component(0),
        tenkf_effective_size: trimmed.diagnostics.effective_size,
        pf_effective_size: pf.diagnostics.effective_size,
    })
}

pub fn run_bimodal(c: &BimodalConfig, master: &SeedStream, count: usize) -> ScenarioOutput {
    let mut out = ScenarioOutput::default();
    let t = toy(c);
    let limits = (|| -> tenkf::Result<_> {
        let joint = t.joint(c.points)?;
        let k = t.gain();
        let bayes = bayes_posterior(&joint, c.y_star)?;
        let enkf = enkf_limit_pdf(&joint, k, c.y_star)?;
        let large = tenkf_limit_pdf(&joint, k, c.y_star, c.lambda_large)?;
        let small = tenkf_limit_pdf(&joint, k, c.y_star, c.lambda_small)?;
        let grid = c
            .lambdas
            .iter()
            .map(|&l| tenkf_limit_pdf(&joint, k, c.y_star, l))
            .collect::<tenkf::Result<Vec<_>>>()?;
        let at_sample = tenkf_limit_pdf(&joint, k, c.y_star, c.sample_lambda)?;
        Ok((joint, bayes, enkf, large, small, grid, at_sample))
    })();
    let (joint, bayes, enkf, large, small, grid, at_sample) = match limits {
        Ok(v) => v,
        Err(e) => {
            out.failures.push(crate::output::Failure {
                replicate: 0,
                context: "quadrature".into(),
                error: e.to_string(),
            });
            return out;
        }
    };
    let ks = |a: &DensityGrid, b: &DensityGrid| ks_distance(Dist1d::Grid(a), Dist1d::Grid(b)).unwrap_or(1.0);

    let mut dens = Table::new("densities", &["density", "lambda", "x", "pdf"]);
    let prior = joint.marginal_x().ok();
    let mut put = |name: &str, lambda: Option<f64>, g: &DensityGrid| {
        for (i, v) in g.values().iter().enumerate() {
            dens.push(vec![name.into(), lambda.into(), g.axis().value(i).into(), (*v).into()]);
        }
    };
    if let Some(p) = &prior {
        put("prior", None, p);
    }
    put("bayes", None, &bayes);
    put("enkf-limit", None, &enkf);
    for (l, g) in c.lambdas.iter().zip(&grid) {
        put("tenkf-limit", Some(*l), g);
    }

    let mut dist = Table::new("distances", &["density", "lambda", "ks_to_bayes", "ks_to_enkf_limit"]);
    dist.push(vec![
        "enkf-limit".into(),
        None::<f64>.into(),
        ks(&enkf, &bayes).into(),
        0.0.into(),
    ]);
    for (l, g) in [(c.lambda_large, &large)]
        .into_iter()
        .chain(c.lambdas.iter().copied().zip(&grid))
        .chain([(c.lambda_small, &small)])
    {
        dist.push(vec![
            "tenkf-limit".into(),
            l.into(),
            ks(g, &bayes).into(),
            ks(g, &enkf).into(),
        ]);
    }

    out.checks.push(Check::new(
        format!("KS(tenkf-limit lambda={}, enkf-limit)", lambda_label(c.lambda_large)),
        ks(&large, &enkf),
        "<",
        KS_LARGE_LAMBDA,
    ));
    out.checks.push(Check::new(
        format!("KS(tenkf-limit lambda={}, bayes)", lambda_label(c.lambda_small)),
        ks(&small, &bayes),
        "<",
        KS_SMALL_LAMBDA,
    ));
    let along: Vec<f64> = grid.iter().map(|g| ks(g, &bayes)).collect();
    let monotone = along.windows(2).all(|w| w[1] <= w[0]);
    out.checks.push(Check::holds(
        "KS(tenkf-limit, bayes) non-increasing along the lambda grid",
        monotone,
        along.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(" "),
    ));

    let (results, failures) = replicates(master, count, |_, seeds| ctx(sample(c, seeds), || "sampling".into()));
    out.failures.extend(failures);
    let mut samp = Table::new(
        "sampling",
        &["replicate", "filter", "lambda", "effective_size", "ks_to_limit"],
    );
    let mut worst_t: f64 = 0.0;
    let mut worst_p: f64 = 0.0;
    for (m, s) in &results {
        let kt = ks_distance(Dist1d::Sample(&s.tenkf), Dist1d::Grid(&at_sample)).unwrap_or(1.0);
        let kp = ks_distance(Dist1d::Sample(&s.pf), Dist1d::Grid(&bayes)).unwrap_or(1.0);
        worst_t = worst_t.max(kt);
        worst_p = worst_p.max(kp);
        samp.push(vec![
            (*m).into(),
            "tenkf".into(),
            c.sample_lambda.into(),
            s.tenkf_effective_size.into(),
            kt.into(),
        ]);
        samp.push(vec![
            (*m).into(),
            "pf".into(),
            None::<f64>.into(),
            s.pf_effective_size.into(),
            kp.into(),
        ]);
    }
    if !results.is_empty() {
        out.checks.push(Check::new(
            format!(
                "KS(tenkf sample, tenkf-limit) at lambda={}",
                lambda_label(c.sample_lambda)
            ),
            worst_t,
            "<",
            KS_TENKF_SAMPLE,
        ));
        out.checks
            .push(Check::new("KS(pf sample, bayes)", worst_p, "<", KS_PF_SAMPLE));
    }
    out.tables = vec![dens, dist, samp];
    out
}
