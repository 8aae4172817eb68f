use tenkf::filters::{InitialConditions, L63InitialConditions};
use tenkf::integrators::{Integrated, IntegratorConfig};
use tenkf::metrics::{histogram, ks_distance, Dist1d};
use tenkf::models::{Lorenz63, Lorenz63Params, MeasModel, Propagator, SelectObservation};
use tenkf::{enkf_update, forecast, pf_update, tenkf_update, Ensemble, SeedStream, TrimConfig};

use super::{ctx, replicates};
use crate::config::L63Config;
use crate::output::{Check, ScenarioOutput, Table};

/// Component whose posterior marginal the checks compare.
pub const CHECKED_COMPONENT: usize = 1;

struct Posterior {
    filter: &'static str,
    lambda: Option<f64>,
    ensemble: Ensemble,
    effective_size: f64,
}

fn replicate(c: &L63Config, seeds: &SeedStream) -> tenkf::Result<Vec<Posterior>> {
    let model = Lorenz63::new(Lorenz63Params {
        alpha: c.alpha,
        rho: c.rho,
        beta: c.beta,
        sigma: c.sigma,
    })?;
    let dynamics = Integrated::new(model, IntegratorConfig::heun(c.dt))?;
    let meas = SelectObservation::second_component(c.tau)?;
    let initial = L63InitialConditions {
        center: [c.x1_0, c.truth_x2_0, c.x3_0],
        std: [c.sigma1_0, c.sigma2_0, c.sigma3_0],
        observed: 1,
    };
    let (truth_s, obs_s) = (seeds.child(0), seeds.child(1));
    let mut truth = initial.truth(&mut truth_s.child(0).rng());
    let mut y0 = [0.0];
    meas.observe(&truth, &mut obs_s.child(0).rng(), &mut y0);
    let prior = initial.prior(&y0, c.n, &mut seeds.child(2).rng())?;
    dynamics.propagate(&mut truth, 0.0, c.t1, &mut truth_s.child(1).rng())?;
    let mut y_star = [0.0];
    meas.observe(&truth, &mut obs_s.child(1).rng(), &mut y_star);

    let j = forecast(&prior, &dynamics, &meas, 0.0, c.t1, &seeds.child(3))?;
    let up = seeds.child(4);
    let mut out = vec![Posterior {
        filter: "forecast",
        lambda: None,
        ensemble: j.states().clone(),
        effective_size: c.n as f64,
    }];
    let e = enkf_update(&j, &y_star)?;
    out.push(Posterior {
        filter: "enkf",
        lambda: None,
        effective_size: e.diagnostics.effective_size,
        ensemble: e.posterior,
    });
    for &l in &c.lambdas {
        let t = tenkf_update(&j, &y_star, &TrimConfig::fixed(l), &mut up.rng())?;
        out.push(Posterior {
            filter: "tenkf",
            lambda: Some(l),
            effective_size: t.diagnostics.effective_size,
            ensemble: t.posterior,
        });
    }
    let p = pf_update(&j, &y_star, &meas, &mut up.rng())?;
    out.push(Posterior {
        filter: "pf",
        lambda: None,
        effective_size: p.diagnostics.effective_size,
        ensemble: p.posterior,
    });
    Ok(out)
}

pub fn run_l63(c: &L63Config, master: &SeedStream, count: usize) -> ScenarioOutput {
    let (results, failures) = replicates(master, count, |_, seeds| ctx(replicate(c, seeds), || "update".into()));
    let mut hist = Table::new(
        "histograms",
        &["replicate", "filter", "lambda", "component", "bin_lo", "bin_hi", "mass"],
    );
    let mut ks = Table::new(
        "ks",
        &[
            "replicate",
            "filter",
            "lambda",
            "component",
            "effective_size",
            "ks_to_pf",
        ],
    );
    let mut checks = Vec::new();
    let mut monotone_all = true;
    let mut monotone_detail = Vec::new();
    let mut worst_ratio: f64 = 0.0;
    for (m, posts) in &results {
        for comp in 0..3 {
            let samples: Vec<Vec<f64>> = posts.iter().map(|p| p.ensemble.component(comp)).collect();
            let lo = samples.iter().flatten().copied().fold(f64::INFINITY, f64::min);
            let hi = samples.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
            let hi = if hi > lo { hi } else { lo + 1.0 };
            let pf_comp = &samples[samples.len() - 1];
            for (p, s) in posts.iter().zip(&samples) {
                if let Ok(h) = histogram(s, lo, hi, c.bins) {
                    for (b, mass) in h.masses.iter().enumerate() {
                        hist.push(vec![
                            (*m).into(),
                            p.filter.into(),
                            p.lambda.into(),
                            comp.into(),
                            h.edges[b].into(),
                            h.edges[b + 1].into(),
                            (*mass).into(),
                        ]);
                    }
                }
                let d = ks_distance(Dist1d::Sample(s), Dist1d::Sample(pf_comp)).unwrap_or(1.0);
                ks.push(vec![
                    (*m).into(),
                    p.filter.into(),
                    p.lambda.into(),
                    comp.into(),
                    p.effective_size.into(),
                    d.into(),
                ]);
            }
        }
        let marginal = |p: &Posterior| {
            ks_distance(
                Dist1d::Sample(&p.ensemble.component(CHECKED_COMPONENT)),
                Dist1d::Sample(&posts.last().unwrap().ensemble.component(CHECKED_COMPONENT)),
            )
            .unwrap_or(1.0)
        };
        let ks_enkf = marginal(&posts[1]);
        let mut trimmed: Vec<(f64, f64)> = posts
            .iter()
            .filter_map(|p| p.lambda.map(|l| (l, marginal(p))))
            .collect();
        trimmed.sort_by(|a, b| b.0.total_cmp(&a.0));
        let monotone = trimmed.windows(2).all(|w| w[1].1 < w[0].1);
        monotone_all &= monotone;
        monotone_detail.push(
            trimmed
                .iter()
                .map(|(l, d)| format!("{l}:{d:.4}"))
                .collect::<Vec<_>>()
                .join(" "),
        );
        if let Some(&(_, smallest)) = trimmed.last() {
            worst_ratio = worst_ratio.max(smallest / ks_enkf);
        }
    }
    if !results.is_empty() {
        checks.push(Check::holds(
            "KS(tenkf, pf) on x2 decreases as lambda decreases",
            monotone_all,
            monotone_detail.join(" | "),
        ));
        checks.push(Check::new(
            "KS(tenkf at smallest lambda, pf) / KS(enkf, pf) on x2",
            worst_ratio,
            "<",
            0.5,
        ));
    }
    ScenarioOutput {
        tables: vec![hist, ks],
        checks,
        failures,
    }
}
