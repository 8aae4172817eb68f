//! Configuration-driven twin experiments for the `tenkf` filters.
//!
//! A run reads one TOML file (see [`config`]), executes the named scenario
//! over its replicates, and writes comma-separated tables plus a
//! `metadata.toml` that reproduces the run (see [`output`]).
//!
//! ```
//! use tenkf_experiments::{config::validate_config, run_scenario};
//!
//! let cfg = validate_config(
//!     "version = 1\nseed = 3\n[scenario.linear-gaussian-check]\nn = 2000\nsteps = 2\n",
//! )
//! .unwrap();
//! let out = run_scenario(&cfg);
//! assert!(out.failures.is_empty());
//! assert_eq!(out.table("moments").unwrap().rows.len(), 2 * 5);
//! ```

pub mod config;
pub mod output;
pub mod scenarios;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

pub use config::{load, validate_config, ConfigError, ExperimentConfig, Scenario};
pub use output::{emit_results, Check, ScenarioOutput, Table};
pub use scenarios::run_scenario;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const CONFIG: i32 = 1;
    pub const RUNTIME: i32 = 2;
    pub const CHECK_FAILED: i32 = 3;
}

/// Outcome of [`execute`].
#[derive(Debug)]
pub struct Execution {
    pub output: Option<ScenarioOutput>,
    pub files: Vec<PathBuf>,
    pub exit_code: i32,
}

/// Runs `cfg`, writes its results to `dir`, and maps the outcome to an exit
/// code. `threads` and `overrides` are only recorded.
pub fn execute(
    cfg: &ExperimentConfig,
    dir: &Path,
    threads: usize,
    overrides: Vec<(String, String)>,
) -> std::io::Result<Execution> {
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let output = (cfg.replicates > 0).then(|| run_scenario(cfg));
    let info = output::RunInfo {
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        started_unix,
        threads,
        overrides,
    };
    let files = emit_results(dir, cfg, &info, output.as_ref())?;
    let exit_code = match &output {
        None => exit::OK,
        Some(o) if !o.failures.is_empty() => exit::RUNTIME,
        Some(o) if !o.all_passed() => exit::CHECK_FAILED,
        Some(_) => exit::OK,
    };
    Ok(Execution {
        output,
        files,
        exit_code,
    })
}
