//! Experiment configuration files.
//!
//! The format is TOML. A file names exactly one scenario stanza:
//!
//! ```toml
//! version = 1
//! seed = 42
//! replicates = 30
//!
//! [scenario.l96-rmse-sweep]
//! n = [1000]
//! dt_obs = [0.9]
//! ```
//!
//! Every key is optional except `version`; missing keys take the scenario's
//! defaults. Unknown keys and out-of-range values are errors, and all of them
//! are reported at once. A `metadata.toml` written by a run is also accepted:
//! its `[config]` table is used and `[meta]` is ignored.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use toml::{Table, Value};

pub const CONFIG_VERSION: i64 = 1;

pub const SCENARIOS: [&str; 5] = [
    "l63-limit-dist",
    "l96-rmse-sweep",
    "l96-adaptive-aug",
    "linear-gaussian-check",
    "bimodal-oracle-check",
];

/// One problem found while validating a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

/// Every problem found in a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub issues: Vec<Issue>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} configuration error(s):", self.issues.len())?;
        for i in &self.issues {
            writeln!(f, "  {}: {}", i.path, i.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub replicates: usize,
    pub out: Option<PathBuf>,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    L63LimitDist(L63Config),
    L96RmseSweep(L96SweepConfig),
    L96AdaptiveAug(L96AugConfig),
    LinearGaussianCheck(LinearConfig),
    BimodalOracleCheck(BimodalConfig),
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::L63LimitDist(_) => SCENARIOS[0],
            Scenario::L96RmseSweep(_) => SCENARIOS[1],
            Scenario::L96AdaptiveAug(_) => SCENARIOS[2],
            Scenario::LinearGaussianCheck(_) => SCENARIOS[3],
            Scenario::BimodalOracleCheck(_) => SCENARIOS[4],
        }
    }

    pub fn default_replicates(&self) -> usize {
        match self {
            Scenario::L96RmseSweep(_) => 30,
            Scenario::L96AdaptiveAug(_) => 10,
            _ => 1,
        }
    }

    /// The scenario with every field at its default.
    pub fn default_for(name: &str) -> Option<Scenario> {
        let empty = Table::new();
        let mut issues = Vec::new();
        let s = parse_stanza(name, &empty, &format!("scenario.{name}"), &mut issues)?;
        debug_assert!(issues.is_empty());
        Some(s)
    }

    /// Short description for `list-scenarios`.
    pub fn summary(name: &str) -> &'static str {
        match name {
            "l63-limit-dist" => "Lorenz-63 SDE, one update: EnKF, TEnKF over a λ grid and PF posteriors",
            "l96-rmse-sweep" => "stochastic Lorenz-96: time-averaged RMSE of EnKF and TEnKF per replicate",
            "l96-adaptive-aug" => "deterministic Lorenz-96: TEnKF with ensemble augmentation vs EnKF",
            "linear-gaussian-check" => "scalar linear-Gaussian model: all filters against the exact Kalman filter",
            "bimodal-oracle-check" => "bimodal 1-D toy: limit densities and samples against quadrature",
            _ => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct L63Config {
    pub alpha: f64,
    pub rho: f64,
    pub beta: f64,
    pub sigma: f64,
    pub tau: f64,
    pub t1: f64,
    pub dt: f64,
    pub n: usize,
    pub x1_0: f64,
    pub x3_0: f64,
    pub sigma1_0: f64,
    pub sigma2_0: f64,
    pub sigma3_0: f64,
    /// Center of the truth's `x₂(0)`.
    pub truth_x2_0: f64,
    pub lambdas: Vec<f64>,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct L96Common {
    pub dim: usize,
    pub forcing: f64,
    pub sigma: f64,
    pub tau: f64,
    pub t_f: f64,
    pub mu0: f64,
    pub mu1: f64,
    pub sigma0: f64,
    pub target_ne: f64,
    pub include_damping: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct L96SweepConfig {
    pub common: L96Common,
    pub dt: f64,
    pub n: Vec<usize>,
    pub dt_obs: Vec<f64>,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct L96AugConfig {
    pub common: L96Common,
    pub n: usize,
    pub dt_obs: Vec<f64>,
    pub r_max: f64,
    pub d_max: f64,
    pub sigma_p: f64,
    pub rtol: f64,
    pub atol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearConfig {
    pub a: f64,
    pub q: f64,
    pub h: f64,
    pub r: f64,
    pub prior_mean: f64,
    pub prior_var: f64,
    pub steps: usize,
    pub n: usize,
    pub lambdas: Vec<f64>,
    pub z_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BimodalConfig {
    pub center: f64,
    pub mode_var: f64,
    pub noise_var: f64,
    pub y_star: f64,
    pub points: usize,
    pub lambdas: Vec<f64>,
    pub lambda_small: f64,
    pub lambda_large: f64,
    pub n: usize,
    pub sample_lambda: f64,
}

/// Reads and validates a configuration file.
pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        issues: vec![Issue {
            path: path.display().to_string(),
            message: format!("cannot read: {e}"),
        }],
    })?;
    validate_config(&text)
}

/// Parses, defaults and range-checks a configuration document.
pub fn validate_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let doc: Table = text.parse().map_err(|e: toml::de::Error| ConfigError {
        issues: vec![Issue {
            path: "<document>".into(),
            message: e.to_string().trim().to_string(),
        }],
    })?;
    let (root, prefix) = match (doc.get("meta"), doc.get("config")) {
        (Some(Value::Table(_)), Some(Value::Table(c))) => (c, "config."),
        _ => (&doc, ""),
    };
    let mut issues = Vec::new();
    let mut top = Fields::new(root, prefix.trim_end_matches('.').to_string(), &mut issues);
    match top.take("version") {
        Some(Value::Integer(CONFIG_VERSION)) => {}
        Some(Value::Integer(v)) => top.issue("version", format!("unsupported version {v}; expected {CONFIG_VERSION}")),
        Some(_) => top.issue("version", "must be an integer".into()),
        None => top.issue("version", format!("missing; set `version = {CONFIG_VERSION}`")),
    }
    let seed = top.int("seed", 0, 0).map(|v| v as u64);
    let replicates = top.int_opt("replicates", 0).map(|v| v as usize);
    let out = match top.take("out") {
        None => None,
        Some(Value::String(s)) => Some(PathBuf::from(s)),
        Some(_) => {
            top.issue("out", "must be a string".into());
            None
        }
    };
    let scenario = match top.take("scenario") {
        Some(Value::Table(t)) => {
            let names: Vec<&String> = t.keys().collect();
            match names.as_slice() {
                [name] => {
                    let path = join(&top.path, &format!("scenario.{name}"));
                    match t.get(*name) {
                        Some(Value::Table(stanza)) => {
                            let s = parse_stanza(name, stanza, &path, top.issues);
                            if s.is_none() {
                                top.issues.push(Issue {
                                    path,
                                    message: format!("unknown scenario; expected one of {}", SCENARIOS.join(", ")),
                                });
                            }
                            s
                        }
                        _ => {
                            top.issues.push(Issue {
                                path,
                                message: "must be a table".into(),
                            });
                            None
                        }
                    }
                }
                [] => {
                    top.issue("scenario", "names no scenario".into());
                    None
                }
                _ => {
                    top.issue("scenario", "must name exactly one scenario stanza".into());
                    None
                }
            }
        }
        Some(_) => {
            top.issue("scenario", "must be a table like [scenario.l63-limit-dist]".into());
            None
        }
        None => {
            top.issue("scenario", "missing scenario stanza".into());
            None
        }
    };
    top.finish();
    match (scenario, seed) {
        (Some(scenario), Some(seed)) if issues.is_empty() => Ok(ExperimentConfig {
            seed,
            replicates: replicates.unwrap_or_else(|| scenario.default_replicates()),
            out,
            scenario,
        }),
        _ => Err(ConfigError { issues }),
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

/// Walks one table, recording type and range problems and unknown keys.
struct Fields<'a, 'i> {
    table: &'a Table,
    path: String,
    used: BTreeSet<String>,
    issues: &'i mut Vec<Issue>,
}

impl<'a, 'i> Fields<'a, 'i> {
    fn new(table: &'a Table, path: String, issues: &'i mut Vec<Issue>) -> Self {
        Fields {
            table,
            path,
            used: BTreeSet::new(),
            issues,
        }
    }

    fn issue(&mut self, key: &str, message: String) {
        self.issues.push(Issue {
            path: join(&self.path, key),
            message,
        });
    }

    fn take(&mut self, key: &str) -> Option<&'a Value> {
        self.used.insert(key.to_string());
        self.table.get(key)
    }

    fn float(&mut self, key: &str, default: f64, check: impl Fn(f64) -> Option<&'static str>) -> f64 {
        let v = match self.take(key) {
            None => return default,
            Some(Value::Float(f)) => *f,
            Some(Value::Integer(i)) => *i as f64,
            Some(_) => {
                self.issue(key, "must be a number".into());
                return default;
            }
        };
        if !v.is_finite() {
            self.issue(key, "must be finite".into());
        } else if let Some(msg) = check(v) {
            self.issue(key, format!("{msg}, got {v}"));
        }
        v
    }

    fn int_opt(&mut self, key: &str, min: i64) -> Option<i64> {
        match self.take(key) {
            None => None,
            Some(Value::Integer(i)) if *i >= min => Some(*i),
            Some(Value::Integer(i)) => {
                self.issue(key, format!("must be at least {min}, got {i}"));
                None
            }
            Some(_) => {
                self.issue(key, "must be an integer".into());
                None
            }
        }
    }

    fn int(&mut self, key: &str, default: i64, min: i64) -> Option<i64> {
        let present = self.table.contains_key(key);
        match self.int_opt(key, min) {
            Some(v) => Some(v),
            None if !present => Some(default),
            None => None,
        }
    }

    fn count(&mut self, key: &str, default: usize, min: usize) -> usize {
        self.int(key, default as i64, min as i64)
            .map_or(default, |v| v as usize)
    }

    fn boolean(&mut self, key: &str, default: bool) -> bool {
        match self.take(key) {
            None => default,
            Some(Value::Boolean(b)) => *b,
            Some(_) => {
                self.issue(key, "must be true or false".into());
                default
            }
        }
    }

    fn float_list(&mut self, key: &str, default: &[f64], check: impl Fn(f64) -> Option<&'static str>) -> Vec<f64> {
        let arr = match self.take(key) {
            None => return default.to_vec(),
            Some(Value::Array(a)) => a,
            Some(_) => {
                self.issue(key, "must be an array of numbers".into());
                return default.to_vec();
            }
        };
        if arr.is_empty() {
            self.issue(key, "must not be empty".into());
        }
        let mut out = Vec::with_capacity(arr.len());
        for (i, v) in arr.iter().enumerate() {
            let x = match v {
                Value::Float(f) => *f,
                Value::Integer(n) => *n as f64,
                _ => {
                    self.issue(&format!("{key}[{i}]"), "must be a number".into());
                    continue;
                }
            };
            if let Some(msg) = check(x).or((!x.is_finite()).then_some("must be finite")) {
                self.issue(&format!("{key}[{i}]"), format!("{msg}, got {x}"));
            }
            out.push(x);
        }
        out
    }

    fn count_list(&mut self, key: &str, default: &[usize], min: usize) -> Vec<usize> {
        let arr = match self.take(key) {
            None => return default.to_vec(),
            Some(Value::Array(a)) => a,
            Some(_) => {
                self.issue(key, "must be an array of integers".into());
                return default.to_vec();
            }
        };
        if arr.is_empty() {
            self.issue(key, "must not be empty".into());
        }
        let mut out = Vec::with_capacity(arr.len());
        for (i, v) in arr.iter().enumerate() {
            match v {
                Value::Integer(n) if *n >= min as i64 => out.push(*n as usize),
                Value::Integer(n) => self.issue(&format!("{key}[{i}]"), format!("must be at least {min}, got {n}")),
                _ => self.issue(&format!("{key}[{i}]"), "must be an integer".into()),
            }
        }
        out
    }

    fn finish(self) {
        for key in self.table.keys() {
            if !self.used.contains(key) {
                self.issues.push(Issue {
                    path: join(&self.path, key),
                    message: "unknown key".into(),
                });
            }
        }
    }
}

fn positive(v: f64) -> Option<&'static str> {
    (v <= 0.0).then_some("must be positive")
}

fn non_negative(v: f64) -> Option<&'static str> {
    (v < 0.0).then_some("must be non-negative")
}

fn any(_: f64) -> Option<&'static str> {
    None
}

fn parse_stanza(name: &str, t: &Table, path: &str, issues: &mut Vec<Issue>) -> Option<Scenario> {
    if !SCENARIOS.contains(&name) {
        return None;
    }
    let mut f = Fields::new(t, path.to_string(), issues);
    let s = match name {
        "l63-limit-dist" => {
            let tau = f.float("tau", 0.2, positive);
            let c = L63Config {
                alpha: f.float("alpha", 10.0, any),
                rho: f.float("rho", 28.0, any),
                beta: f.float("beta", 8.0 / 3.0, positive),
                sigma: f.float("sigma", 0.01, non_negative),
                tau,
                t1: f.float("t1", 1.0, positive),
                dt: f.float("dt", 0.01, positive),
                n: f.count("n", 100_000, 2),
                x1_0: f.float("x1_0", 1.5, any),
                x3_0: f.float("x3_0", 25.0, any),
                sigma1_0: f.float("sigma1_0", 0.1, non_negative),
                sigma2_0: f.float("sigma2_0", tau, non_negative),
                sigma3_0: f.float("sigma3_0", 0.1, non_negative),
                truth_x2_0: f.float("truth_x2_0", DEFAULT_TRUTH_X2_0, any),
                lambdas: f.float_list("lambdas", &[10.0, 1.0, 0.3, 0.1, 0.03], positive),
                bins: f.count("bins", 200, 1),
            };
            Scenario::L63LimitDist(c)
        }
        "l96-rmse-sweep" => {
            let common = l96_common(&mut f, 0.01, 15.0);
            let c = L96SweepConfig {
                dt: f.float("dt", 0.01, positive),
                n: f.count_list("n", &[1000], 2),
                dt_obs: f.float_list("dt_obs", &[0.9], positive),
                alpha: f.float("alpha", 0.05, |v| {
                    (!(v > 0.0 && v < 1.0)).then_some("must lie in (0, 1)")
                }),
                common,
            };
            if let Some(&n_min) = c.n.iter().min() {
                if c.common.target_ne > n_min as f64 {
                    f.issue(
                        "target_ne",
                        format!(
                            "target_ne = {} exceeds the smallest ensemble size n = {n_min}",
                            c.common.target_ne
                        ),
                    );
                }
            }
            Scenario::L96RmseSweep(c)
        }
        "l96-adaptive-aug" => {
            let common = l96_common(&mut f, 0.0, 32.0);
            let c = L96AugConfig {
                n: f.count("n", 200, 2),
                dt_obs: f.float_list("dt_obs", &[0.5, 0.8], positive),
                r_max: f.float("r_max", 3.0, |v| (v < 1.0).then_some("must be at least 1")),
                d_max: f.float("d_max", 3.0, positive),
                sigma_p: f.float("sigma_p", 0.4, non_negative),
                rtol: f.float("rtol", 1e-6, positive),
                atol: f.float("atol", 1e-8, positive),
                common,
            };
            if c.common.sigma > 0.0 {
                f.issue(
                    "sigma",
                    "the adaptive RK45 forecast is deterministic; sigma must be 0".into(),
                );
            }
            if c.common.target_ne > c.n as f64 {
                f.issue(
                    "target_ne",
                    format!(
                        "target_ne = {} exceeds the ensemble size n = {}",
                        c.common.target_ne, c.n
                    ),
                );
            }
            Scenario::L96AdaptiveAug(c)
        }
        "linear-gaussian-check" => Scenario::LinearGaussianCheck(LinearConfig {
            a: f.float("a", 1.0, any),
            q: f.float("q", 0.01, non_negative),
            h: f.float("h", 1.0, any),
            r: f.float("r", 0.04, positive),
            prior_mean: f.float("prior_mean", 0.0, any),
            prior_var: f.float("prior_var", 1.0, positive),
            steps: f.count("steps", 5, 1),
            n: f.count("n", 100_000, 2),
            lambdas: f.float_list("lambdas", &[10.0, 1.0, 0.1], positive),
            z_max: f.float("z_max", 4.0, positive),
        }),
        "bimodal-oracle-check" => Scenario::BimodalOracleCheck(BimodalConfig {
            center: f.float("center", 2.0, positive),
            mode_var: f.float("mode_var", 0.25, positive),
            noise_var: f.float("noise_var", 0.25, positive),
            y_star: f.float("y_star", 1.5, any),
            points: f.count("points", 2048, 16),
            lambdas: f.float_list("lambdas", &[10.0, 1.0, 0.3, 0.1, 0.03], positive),
            lambda_small: f.float("lambda_small", 1e-4, positive),
            lambda_large: f.float("lambda_large", 1e9, positive),
            n: f.count("n", 100_000, 2),
            sample_lambda: f.float("sample_lambda", 0.3, positive),
        }),
        _ => unreachable!(),
    };
    f.finish();
    Some(s)
}

/// Default center of the truth's `x₂(0)` in the Lorenz-63 scenario.
pub const DEFAULT_TRUTH_X2_0: f64 = 0.0;

fn l96_common(f: &mut Fields<'_, '_>, sigma: f64, t_f: f64) -> L96Common {
    let c = L96Common {
        dim: f.count("dim", 36, 4),
        forcing: f.float("forcing", 8.0, any),
        sigma: f.float("sigma", sigma, non_negative),
        tau: f.float("tau", 0.05, positive),
        t_f: f.float("t_f", t_f, non_negative),
        mu0: f.float("mu0", 1.0, any),
        mu1: f.float("mu1", 0.1, any),
        sigma0: f.float("sigma0", 0.01, non_negative),
        target_ne: f.float("target_ne", 50.0, |v| (v < 1.0).then_some("must be at least 1")),
        include_damping: f.boolean("include_damping", true),
    };
    if !c.dim.is_multiple_of(2) {
        f.issue(
            "dim",
            format!("must be even so that every other component is observed, got {}", c.dim),
        );
    }
    c
}

/// The resolved configuration as a TOML document that [`validate_config`]
/// accepts.
pub fn to_toml(cfg: &ExperimentConfig) -> Table {
    let mut root = Table::new();
    root.insert("version".into(), Value::Integer(CONFIG_VERSION));
    root.insert("seed".into(), Value::Integer(cfg.seed as i64));
    root.insert("replicates".into(), Value::Integer(cfg.replicates as i64));
    if let Some(out) = &cfg.out {
        root.insert("out".into(), Value::String(out.display().to_string()));
    }
    let mut stanza = Table::new();
    let mut put = |k: &str, v: Value| {
        stanza.insert(k.to_string(), v);
    };
    let fl = |v: f64| Value::Float(v);
    let int = |v: usize| Value::Integer(v as i64);
    let fls = |v: &[f64]| Value::Array(v.iter().map(|x| Value::Float(*x)).collect());
    match &cfg.scenario {
        Scenario::L63LimitDist(c) => {
            put("alpha", fl(c.alpha));
            put("rho", fl(c.rho));
            put("beta", fl(c.beta));
            put("sigma", fl(c.sigma));
            put("tau", fl(c.tau));
            put("t1", fl(c.t1));
            put("dt", fl(c.dt));
            put("n", int(c.n));
            put("x1_0", fl(c.x1_0));
            put("x3_0", fl(c.x3_0));
            put("sigma1_0", fl(c.sigma1_0));
            put("sigma2_0", fl(c.sigma2_0));
            put("sigma3_0", fl(c.sigma3_0));
            put("truth_x2_0", fl(c.truth_x2_0));
            put("lambdas", fls(&c.lambdas));
            put("bins", int(c.bins));
        }
        Scenario::L96RmseSweep(c) => {
            put_common(&mut put, &c.common);
            put("dt", fl(c.dt));
            put("n", Value::Array(c.n.iter().map(|&v| int(v)).collect()));
            put("dt_obs", fls(&c.dt_obs));
            put("alpha", fl(c.alpha));
        }
        Scenario::L96AdaptiveAug(c) => {
            put_common(&mut put, &c.common);
            put("n", int(c.n));
            put("dt_obs", fls(&c.dt_obs));
            put("r_max", fl(c.r_max));
            put("d_max", fl(c.d_max));
            put("sigma_p", fl(c.sigma_p));
            put("rtol", fl(c.rtol));
            put("atol", fl(c.atol));
        }
        Scenario::LinearGaussianCheck(c) => {
            put("a", fl(c.a));
            put("q", fl(c.q));
            put("h", fl(c.h));
            put("r", fl(c.r));
            put("prior_mean", fl(c.prior_mean));
            put("prior_var", fl(c.prior_var));
            put("steps", int(c.steps));
            put("n", int(c.n));
            put("lambdas", fls(&c.lambdas));
            put("z_max", fl(c.z_max));
        }
        Scenario::BimodalOracleCheck(c) => {
            put("center", fl(c.center));
            put("mode_var", fl(c.mode_var));
            put("noise_var", fl(c.noise_var));
            put("y_star", fl(c.y_star));
            put("points", int(c.points));
            put("lambdas", fls(&c.lambdas));
            put("lambda_small", fl(c.lambda_small));
            put("lambda_large", fl(c.lambda_large));
            put("n", int(c.n));
            put("sample_lambda", fl(c.sample_lambda));
        }
    }
    let mut sc = Table::new();
    sc.insert(cfg.scenario.name().into(), Value::Table(stanza));
    root.insert("scenario".into(), Value::Table(sc));
    root
}

fn put_common(put: &mut impl FnMut(&str, Value), c: &L96Common) {
    put("dim", Value::Integer(c.dim as i64));
    put("forcing", Value::Float(c.forcing));
    put("sigma", Value::Float(c.sigma));
    put("tau", Value::Float(c.tau));
    put("t_f", Value::Float(c.t_f));
    put("mu0", Value::Float(c.mu0));
    put("mu1", Value::Float(c.mu1));
    put("sigma0", Value::Float(c.sigma0));
    put("target_ne", Value::Float(c.target_ne));
    put("include_damping", Value::Boolean(c.include_damping));
}

/// Resolved values that differ from the published parameter tables, as
/// `(field, resolved, published)`.
pub fn departures_from_published(cfg: &ExperimentConfig) -> Vec<(String, String, String)> {
    let mut out = Vec::new();
    let mut cmp = |field: &str, got: String, published: &str| {
        if got != published {
            out.push((field.to_string(), got, published.to_string()));
        }
    };
    let list = |v: &[f64]| format!("{v:?}");
    match &cfg.scenario {
        Scenario::L63LimitDist(c) => {
            cmp("alpha", c.alpha.to_string(), "10");
            cmp("rho", c.rho.to_string(), "28");
            cmp("beta", c.beta.to_string(), &(8.0f64 / 3.0).to_string());
            cmp("sigma", c.sigma.to_string(), "0.01");
            cmp("tau", c.tau.to_string(), "0.2");
            cmp("t1", c.t1.to_string(), "1");
            cmp("dt", c.dt.to_string(), "0.01");
            cmp("n", c.n.to_string(), "10000000");
            cmp("x1_0", c.x1_0.to_string(), "1.5");
            cmp("x3_0", c.x3_0.to_string(), "25");
            cmp("sigma1_0", c.sigma1_0.to_string(), "0.1");
            cmp("sigma2_0", c.sigma2_0.to_string(), &c.tau.to_string());
            cmp("sigma3_0", c.sigma3_0.to_string(), "0.1");
        }
        Scenario::L96RmseSweep(c) => {
            common_departures(&mut cmp, &c.common, "0.01", "15");
            cmp("dt", c.dt.to_string(), "0.01");
            cmp("n", format!("{:?}", c.n), "[4000]");
            cmp("dt_obs", list(&c.dt_obs), "[0.9]");
            cmp("replicates", cfg.replicates.to_string(), "500");
        }
        Scenario::L96AdaptiveAug(c) => {
            common_departures(&mut cmp, &c.common, "0.01", "32");
            cmp("n", c.n.to_string(), "200");
            cmp("dt_obs", list(&c.dt_obs), "[0.8]");
            cmp("r_max", c.r_max.to_string(), "3");
            cmp("d_max", c.d_max.to_string(), "3");
            cmp("sigma_p", c.sigma_p.to_string(), "0.4");
            cmp("replicates", cfg.replicates.to_string(), "250");
        }
        Scenario::LinearGaussianCheck(_) | Scenario::BimodalOracleCheck(_) => {}
    }
    out
}

fn common_departures(cmp: &mut impl FnMut(&str, String, &str), c: &L96Common, sigma: &str, t_f: &str) {
    cmp("dim", c.dim.to_string(), "36");
    cmp("forcing", c.forcing.to_string(), "8");
    cmp("sigma", c.sigma.to_string(), sigma);
    cmp("tau", c.tau.to_string(), "0.05");
    cmp("t_f", c.t_f.to_string(), t_f);
    cmp("mu0", c.mu0.to_string(), "1");
    cmp("mu1", c.mu1.to_string(), "0.1");
    cmp("sigma0", c.sigma0.to_string(), "0.01");
    cmp("target_ne", c.target_ne.to_string(), "50");
}
