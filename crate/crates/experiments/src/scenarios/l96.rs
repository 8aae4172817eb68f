use rand_distr::{Distribution, StandardNormal};
use tenkf::filters::{AssimilationRun, L96InitialConditions, TwinExperiment};
use tenkf::integrators::{Integrated, IntegratorConfig};
use tenkf::metrics::{median, replicate_quantiles, sign_test_less, time_avg_rmse, DEFAULT_QUANTILES};
use tenkf::models::{Lorenz96, Lorenz96Params, SelectObservation};
use tenkf::{run_assimilation, AugmentConfig, DistanceKind, FilterKind, SeedStream, TrimConfig};

use super::{ctx, replicates};
use crate::config::{L96AugConfig, L96Common, L96SweepConfig};
use crate::output::{Cell, Check, ScenarioOutput, Table};

/// Time-averaged scores of one filter run.
struct Score {
    filter: &'static str,
    n: usize,
    dt_obs: f64,
    rmse: f64,
    mean_rmse: f64,
    run: AssimilationRun,
}

fn model(c: &L96Common) -> tenkf::Result<Lorenz96> {
    Lorenz96::new(Lorenz96Params {
        dim: c.dim,
        forcing: c.forcing,
        sigma: c.sigma,
        include_damping: c.include_damping,
    })
}

/// Replicate-wide offset `z` of the initial condition.
fn offset(seeds: &SeedStream) -> f64 {
    StandardNormal.sample(&mut seeds.child(0).rng())
}

#[allow(clippy::too_many_arguments)]
fn score(
    dynamics: &Integrated<Lorenz96>,
    meas: &SelectObservation,
    initial: &L96InitialConditions,
    t_f: f64,
    n: usize,
    dt_obs: f64,
    filter: &FilterKind,
    seeds: &SeedStream,
) -> Result<Score, (String, tenkf::Error)> {
    let exp = TwinExperiment {
        dynamics,
        meas,
        initial,
        n,
        dt_obs,
        t_final: t_f,
        keep_posteriors: false,
    };
    let label = || format!("{} n={n} dt_obs={dt_obs}", filter.name());
    let run = ctx(run_assimilation(&exp, filter, seeds), label)?;
    let rmse = ctx(time_avg_rmse(&run.rmse_series()), label)?;
    let means: Vec<f64> = run.steps.iter().map(|s| s.mean_rmse).collect();
    let mean_rmse = ctx(time_avg_rmse(&means), label)?;
    Ok(Score {
        filter: filter.name(),
        n,
        dt_obs,
        rmse,
        mean_rmse,
        run,
    })
}

fn rmse_table(results: &[(usize, Vec<Score>)]) -> Table {
    let mut t = Table::new(
        "rmse",
        &[
            "replicate",
            "filter",
            "n",
            "dt_obs",
            "rmse_time_avg",
            "mean_rmse_time_avg",
        ],
    );
    for (m, scores) in results {
        for s in scores {
            t.push(vec![
                (*m).into(),
                s.filter.into(),
                s.n.into(),
                s.dt_obs.into(),
                s.rmse.into(),
                s.mean_rmse.into(),
            ]);
        }
    }
    t
}

fn trace_table(name: &str, results: &[(usize, Vec<Score>)]) -> Table {
    let mut t = Table::new(
        name,
        &[
            "replicate",
            "filter",
            "n",
            "dt_obs",
            "step",
            "time",
            "rmse",
            "forecast_size",
            "n_aug_ratio",
            "near_count",
            "effective_size",
            "lambda",
            "flag",
        ],
    );
    for (m, scores) in results {
        for s in scores {
            for r in &s.run.steps {
                let d = &r.diagnostics;
                t.push(vec![
                    (*m).into(),
                    s.filter.into(),
                    s.n.into(),
                    s.dt_obs.into(),
                    r.step.into(),
                    r.time.into(),
                    r.rmse.into(),
                    d.forecast_size.into(),
                    (d.forecast_size as f64 / s.n as f64).into(),
                    d.near_count.into(),
                    d.effective_size.into(),
                    d.lambda.into(),
                    d.flag.map_or(String::new(), |f| format!("{f:?}")).into(),
                ]);
            }
        }
    }
    t
}

/// Per-cell quantiles of the time-averaged RMSE plus the paired comparison
/// of TEnKF against EnKF.
fn compare(
    results: &[(usize, Vec<Score>)],
    cells: &[(usize, f64)],
    alpha: Option<f64>,
    checked: impl Fn(f64) -> bool,
    checks: &mut Vec<Check>,
) -> Table {
    let mut q = Table::new(
        "quantiles",
        &["filter", "n", "dt_obs", "replicates", "q25", "q50", "q75"],
    );
    for &(n, dt_obs) in cells {
        let pick = |filter: &str| -> Vec<(usize, f64)> {
            results
                .iter()
                .flat_map(|(m, ss)| {
                    ss.iter()
                        .filter(|s| s.filter == filter && s.n == n && s.dt_obs == dt_obs)
                        .map(|s| (*m, s.rmse))
                })
                .collect()
        };
        let enkf = pick("enkf");
        let trimmed = tenkf_name(results);
        let tenkf = pick(trimmed);
        for (name, v) in [("enkf", &enkf), (trimmed, &tenkf)] {
            let vals: Vec<f64> = v.iter().map(|x| x.1).collect();
            let mut row: Vec<Cell> = vec![name.into(), n.into(), dt_obs.into(), vals.len().into()];
            match replicate_quantiles(&vals, &DEFAULT_QUANTILES) {
                Ok(qs) => row.extend(qs.into_iter().map(Cell::from)),
                Err(_) => row.extend([None::<f64>.into(), None::<f64>.into(), None::<f64>.into()]),
            }
            q.push(row);
        }
        if !checked(dt_obs) {
            continue;
        }
        let (Ok(me), Ok(mt)) = (
            median(&enkf.iter().map(|x| x.1).collect::<Vec<_>>()),
            median(&tenkf.iter().map(|x| x.1).collect::<Vec<_>>()),
        ) else {
            continue;
        };
        let cell = format!("n={n} dt_obs={dt_obs}");
        checks.push(
            Check::new(format!("{cell}: median rmse tenkf - enkf"), mt - me, "<", 0.0)
                .with_detail(format!("tenkf {mt:.6} enkf {me:.6}")),
        );
        if let Some(alpha) = alpha {
            let paired: Vec<(f64, f64)> = tenkf
                .iter()
                .filter_map(|(m, t)| enkf.iter().find(|(k, _)| k == m).map(|(_, e)| (*t, *e)))
                .collect();
            let (a, b): (Vec<f64>, Vec<f64>) = paired.into_iter().unzip();
            if let Ok(st) = sign_test_less(&a, &b) {
                checks.push(
                    Check::new(
                        format!("{cell}: sign test p-value, tenkf < enkf"),
                        st.p_value,
                        "<",
                        alpha,
                    )
                    .with_detail(format!("{} of {} pairs favor tenkf", st.wins, st.trials)),
                );
            }
        }
    }
    q
}

fn tenkf_name(results: &[(usize, Vec<Score>)]) -> &'static str {
    results
        .iter()
        .flat_map(|(_, ss)| ss.iter())
        .find(|s| s.filter != "enkf")
        .map_or("tenkf", |s| s.filter)
}

pub fn run_l96_sweep(c: &L96SweepConfig, master: &SeedStream, count: usize) -> ScenarioOutput {
    let filters = [
        FilterKind::Enkf,
        FilterKind::Tenkf {
            trim: TrimConfig::targeting(c.common.target_ne),
            augment: None,
        },
    ];
    let (results, failures) = replicates(master, count, |_, seeds| {
        let dynamics = ctx(
            model(&c.common).and_then(|m| Integrated::new(m, IntegratorConfig::heun(c.dt))),
            || "model".into(),
        )?;
        let meas = ctx(SelectObservation::odd_components(c.common.dim, c.common.tau), || {
            "model".into()
        })?;
        let initial = initial(&c.common, &meas, offset(seeds));
        let mut scores = Vec::new();
        for (i, &dt_obs) in c.dt_obs.iter().enumerate() {
            let cell_seeds = seeds.path(&[1, i as u64]);
            for &n in &c.n {
                for f in &filters {
                    scores.push(score(
                        &dynamics,
                        &meas,
                        &initial,
                        c.common.t_f,
                        n,
                        dt_obs,
                        f,
                        &cell_seeds,
                    )?);
                }
            }
        }
        Ok(scores)
    });
    let cells: Vec<(usize, f64)> = c
        .dt_obs
        .iter()
        .flat_map(|&d| c.n.iter().map(move |&n| (n, d)))
        .collect();
    let mut checks = Vec::new();
    let quantiles = compare(&results, &cells, Some(c.alpha), |_| true, &mut checks);
    ScenarioOutput {
        tables: vec![rmse_table(&results), quantiles, trace_table("series", &results)],
        checks,
        failures,
    }
}

fn initial(c: &L96Common, meas: &SelectObservation, z: f64) -> L96InitialConditions {
    L96InitialConditions {
        dim: c.dim,
        mu0: c.mu0,
        mu1: c.mu1,
        sigma0: c.sigma0,
        tau: c.tau,
        z,
        observed: meas.indices().to_vec(),
    }
}

pub fn run_l96_aug(c: &L96AugConfig, master: &SeedStream, count: usize) -> ScenarioOutput {
    let filters = [
        FilterKind::Enkf,
        FilterKind::Tenkf {
            trim: TrimConfig::targeting(c.common.target_ne),
            augment: Some(AugmentConfig {
                d_max: c.d_max,
                r_max: c.r_max,
                sigma_p: c.sigma_p,
                distance: DistanceKind::MaxAbs,
            }),
        },
    ];
    let (results, failures) = replicates(master, count, |_, seeds| {
        let dynamics = ctx(
            model(&c.common).and_then(|m| Integrated::new(m, IntegratorConfig::rk45(c.rtol, c.atol))),
            || "model".into(),
        )?;
        let meas = ctx(SelectObservation::odd_components(c.common.dim, c.common.tau), || {
            "model".into()
        })?;
        let initial = initial(&c.common, &meas, offset(seeds));
        let mut scores = Vec::new();
        for (i, &dt_obs) in c.dt_obs.iter().enumerate() {
            let cell_seeds = seeds.path(&[1, i as u64]);
            for f in &filters {
                scores.push(score(
                    &dynamics,
                    &meas,
                    &initial,
                    c.common.t_f,
                    c.n,
                    dt_obs,
                    f,
                    &cell_seeds,
                )?);
            }
        }
        Ok(scores)
    });

    let mut aug = Table::new(
        "augmentation",
        &["replicate", "dt_obs", "steps", "n_aug_ratio_time_avg"],
    );
    let mut checks = Vec::new();
    let mut in_range = true;
    let mut means = Vec::new();
    for &dt_obs in &c.dt_obs {
        let mut ratios = Vec::new();
        for (m, scores) in &results {
            for s in scores.iter().filter(|s| s.filter != "enkf" && s.dt_obs == dt_obs) {
                let steps = &s.run.steps;
                let r = if steps.is_empty() {
                    1.0
                } else {
                    steps
                        .iter()
                        .map(|r| r.diagnostics.forecast_size as f64 / c.n as f64)
                        .sum::<f64>()
                        / steps.len() as f64
                };
                in_range &= (1.0..=c.r_max).contains(&r);
                ratios.push(r);
                aug.push(vec![(*m).into(), dt_obs.into(), steps.len().into(), r.into()]);
            }
        }
        if !ratios.is_empty() {
            means.push((dt_obs, ratios.iter().sum::<f64>() / ratios.len() as f64));
        }
    }
    if !results.is_empty() {
        checks.push(Check::holds(
            "time-averaged n_aug/n within [1, r_max]",
            in_range,
            format!("r_max = {}", c.r_max),
        ));
        let mut sorted = means.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        if sorted.len() > 1 {
            let increasing = sorted.windows(2).all(|w| w[1].1 > w[0].1);
            checks.push(Check::holds(
                "mean augmentation ratio increases with dt_obs",
                increasing,
                sorted
                    .iter()
                    .map(|(d, r)| format!("{d}:{r:.4}"))
                    .collect::<Vec<_>>()
                    .join(" "),
            ));
        }
    }
    let cells: Vec<(usize, f64)> = c.dt_obs.iter().map(|&d| (c.n, d)).collect();
    // RMSE ordering is checked at the sparsest observation interval only.
    let sparsest = c.dt_obs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let quantiles = compare(&results, &cells, None, |d| d == sparsest, &mut checks);
    ScenarioOutput {
        tables: vec![rmse_table(&results), quantiles, aug, trace_table("traces", &results)],
        checks,
        failures,
    }
}
