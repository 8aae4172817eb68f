use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tenkf_experiments::config::{self, Scenario, SCENARIOS};
use tenkf_experiments::{execute, exit};

/// Twin experiments for the ensemble Kalman, trimmed ensemble Kalman and
/// particle filters.
#[derive(Parser)]
#[command(name = "tenkf-exp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario named in a configuration file.
    Run(RunArgs),
    /// Check a configuration file and print the resolved configuration.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// List the available scenarios.
    ListScenarios,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides `seed` in the file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out` in the file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replicate count; overrides `replicates` in the file.
    #[arg(long)]
    replicates: Option<usize>,
    /// Worker threads, 0 for one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::ListScenarios => {
            for name in SCENARIOS {
                let replicates = Scenario::default_for(name).map_or(1, |s| s.default_replicates());
                println!(
                    "{name:<24} {} (default replicates: {replicates})",
                    Scenario::summary(name)
                );
            }
            exit::OK
        }
        Command::Validate { config } => match config::load(&config) {
            Ok(cfg) => {
                print!("{}", toml::to_string(&config::to_toml(&cfg)).unwrap_or_default());
                exit::OK
            }
            Err(e) => {
                eprint!("{e}");
                exit::CONFIG
            }
        },
        Command::Run(args) => run(args),
    };
    ExitCode::from(code as u8)
}

fn run(args: RunArgs) -> i32 {
    let mut cfg = match config::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprint!("{e}");
            return exit::CONFIG;
        }
    };
    let mut overrides = Vec::new();
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        overrides.push(("seed".to_string(), seed.to_string()));
    }
    if let Some(r) = args.replicates {
        cfg.replicates = r;
        overrides.push(("replicates".to_string(), r.to_string()));
    }
    if let Some(out) = args.out {
        overrides.push(("out".to_string(), out.display().to_string()));
        cfg.out = Some(out);
    }
    let dir = cfg
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("results").join(cfg.scenario.name()));
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(args.threads).build_global() {
        eprintln!("thread pool: {e}");
        return exit::RUNTIME;
    }
    let threads = rayon::current_num_threads();
    match execute(&cfg, &dir, threads, overrides) {
        Ok(ex) => {
            if let Some(o) = &ex.output {
                for c in &o.checks {
                    let mark = if c.passed { "PASS" } else { "FAIL" };
                    println!(
                        "{mark} {}: {:.6e} {} {:.6e} {}",
                        c.name, c.value, c.relation, c.threshold, c.detail
                    );
                }
                for f in &o.failures {
                    eprintln!("replicate {} failed in {}: {}", f.replicate, f.context, f.error);
                }
            }
            println!("wrote {} file(s) to {}", ex.files.len(), dir.display());
            ex.exit_code
        }
        Err(e) => {
            eprintln!("{e}");
            exit::RUNTIME
        }
    }
}
