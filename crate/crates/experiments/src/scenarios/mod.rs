//! Scenario runners. Each returns its tables and checks without touching
//! the filesystem.

mod bimodal;
mod l63;
mod l96;
mod linear;

use rayon::prelude::*;
use tenkf::SeedStream;

use crate::config::{ExperimentConfig, Scenario};
use crate::output::{Failure, ScenarioOutput};

pub use bimodal::run_bimodal;
pub use l63::run_l63;
pub use l96::{run_l96_aug, run_l96_sweep};
pub use linear::run_linear;

/// Runs the configured scenario. `replicates = 0` returns an empty output.
pub fn run_scenario(cfg: &ExperimentConfig) -> ScenarioOutput {
    if cfg.replicates == 0 {
        return ScenarioOutput::default();
    }
    let master = SeedStream::new(cfg.seed);
    match &cfg.scenario {
        Scenario::L63LimitDist(c) => run_l63(c, &master, cfg.replicates),
        Scenario::L96RmseSweep(c) => run_l96_sweep(c, &master, cfg.replicates),
        Scenario::L96AdaptiveAug(c) => run_l96_aug(c, &master, cfg.replicates),
        Scenario::LinearGaussianCheck(c) => run_linear(c, &master, cfg.replicates),
        Scenario::BimodalOracleCheck(c) => run_bimodal(c, &master, cfg.replicates),
    }
}

/// Runs `f` for replicates `0..count` in parallel, each on `master.child(m)`,
/// and returns results in replicate order with failures split off.
pub(crate) fn replicates<T, F>(master: &SeedStream, count: usize, f: F) -> (Vec<(usize, T)>, Vec<Failure>)
where
    T: Send,
    F: Fn(usize, &SeedStream) -> Result<T, (String, tenkf::Error)> + Sync,
{
    let results: Vec<_> = (0..count)
        .into_par_iter()
        .map(|m| (m, f(m, &master.child(m as u64))))
        .collect();
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (m, r) in results {
        match r {
            Ok(v) => ok.push((m, v)),
            Err((context, e)) => failures.push(Failure {
                replicate: m,
                context,
                error: e.to_string(),
            }),
        }
    }
    (ok, failures)
}

/// Labels a library error with the cell it came from.
pub(crate) fn ctx<T>(r: tenkf::Result<T>, what: impl FnOnce() -> String) -> Result<T, (String, tenkf::Error)> {
    r.map_err(|e| (what(), e))
}

/// λ formatted for row labels.
pub(crate) fn lambda_label(l: f64) -> String {
    format!("{l}")
}
