//! Result files: comma-separated tables and one `metadata.toml` per run.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use toml::{Table as TomlTable, Value};

use crate::config::{departures_from_published, to_toml, ExperimentConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(if v { "true" } else { "false" }.into())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Text(String::new()), Cell::Float)
    }
}

impl From<Option<usize>> for Cell {
    fn from(v: Option<usize>) -> Self {
        v.map_or(Cell::Text(String::new()), Cell::from)
    }
}

/// A column-oriented result table, written as `<name>.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&'static str]) -> Self {
        Table {
            name: name.to_string(),
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width in {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| *h == name)
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            for (i, c) in row.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                match c {
                    Cell::Int(v) => write!(s, "{v}").unwrap(),
                    Cell::Float(v) => s.push_str(&format_float(*v)),
                    Cell::Text(t) => s.push_str(&quote(t)),
                }
            }
            s.push('\n');
        }
        s
    }
}

/// 17 significant digits, so values round-trip exactly.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn quote(t: &str) -> String {
    if t.contains([',', '"', '\n']) {
        format!("\"{}\"", t.replace('"', "\"\""))
    } else {
        t.to_string()
    }
}

/// One pass/fail check evaluated by a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// `"<"`, `"<="`, `">"`, `">="` or `"=="`.
    pub relation: &'static str,
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, relation: &'static str, threshold: f64) -> Self {
        let passed = match relation {
            "<" => value < threshold,
            "<=" => value <= threshold,
            ">" => value > threshold,
            ">=" => value >= threshold,
            _ => panic!("unknown relation {relation}"),
        };
        Check {
            name: name.into(),
            value,
            relation,
            threshold,
            passed,
            detail: String::new(),
        }
    }

    /// A check whose outcome is a boolean property; `value` is 1 or 0.
    pub fn holds(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Self {
        let mut c = Check::raw(name, if ok { 1.0 } else { 0.0 }, "==", 1.0, ok);
        c.detail = detail.into();
        c
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

impl Check {
    fn raw(name: impl Into<String>, value: f64, relation: &'static str, threshold: f64, passed: bool) -> Self {
        Check {
            name: name.into(),
            value,
            relation,
            threshold,
            passed,
            detail: String::new(),
        }
    }
}

/// A replicate or cell that failed; the rest of the run continued.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub replicate: usize,
    pub context: String,
    pub error: String,
}

/// Everything a scenario produced.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioOutput {
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    pub failures: Vec<Failure>,
}

impl ScenarioOutput {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn checks_table(&self) -> Table {
        let mut t = Table::new(
            "checks",
            &["check", "value", "relation", "threshold", "passed", "detail"],
        );
        for c in &self.checks {
            t.push(vec![
                c.name.as_str().into(),
                c.value.into(),
                c.relation.into(),
                c.threshold.into(),
                c.passed.into(),
                c.detail.as_str().into(),
            ]);
        }
        t
    }

    fn failures_table(&self) -> Table {
        let mut t = Table::new("failures", &["replicate", "context", "error"]);
        for f in &self.failures {
            t.push(vec![
                f.replicate.into(),
                f.context.as_str().into(),
                f.error.as_str().into(),
            ]);
        }
        t
    }
}

/// Run-level facts recorded next to the resolved configuration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunInfo {
    pub wall_clock_seconds: f64,
    /// Seconds since the Unix epoch at the start of the run.
    pub started_unix: u64,
    pub threads: usize,
    /// Command-line overrides as `(flag, value)`.
    pub overrides: Vec<(String, String)>,
}

/// The metadata document. `[config]` is a complete configuration that
/// reproduces the run.
pub fn metadata(cfg: &ExperimentConfig, info: &RunInfo, out: Option<&ScenarioOutput>) -> TomlTable {
    let mut meta = TomlTable::new();
    meta.insert("code_version".into(), Value::String(env!("CARGO_PKG_VERSION").into()));
    meta.insert("scenario".into(), Value::String(cfg.scenario.name().into()));
    meta.insert("seed".into(), Value::Integer(cfg.seed as i64));
    meta.insert("replicates".into(), Value::Integer(cfg.replicates as i64));
    meta.insert("threads".into(), Value::Integer(info.threads as i64));
    meta.insert("started_unix".into(), Value::Integer(info.started_unix as i64));
    meta.insert("wall_clock_seconds".into(), Value::Float(info.wall_clock_seconds));
    let mut ov = TomlTable::new();
    for (k, v) in &info.overrides {
        ov.insert(k.clone(), Value::String(v.clone()));
    }
    meta.insert("overrides".into(), Value::Table(ov));
    let mut dep = TomlTable::new();
    for (field, got, published) in departures_from_published(cfg) {
        let mut e = TomlTable::new();
        e.insert("resolved".into(), Value::String(got));
        e.insert("published".into(), Value::String(published));
        dep.insert(field, Value::Table(e));
    }
    meta.insert("departures_from_published".into(), Value::Table(dep));
    if let Some(o) = out {
        meta.insert("checks_passed".into(), Value::Boolean(o.all_passed()));
        meta.insert("failures".into(), Value::Integer(o.failures.len() as i64));
        let files = o
            .tables
            .iter()
            .map(|t| Value::String(format!("{}.csv", t.name)))
            .collect();
        meta.insert("files".into(), Value::Array(files));
    }
    let mut doc = TomlTable::new();
    doc.insert("meta".into(), Value::Table(meta));
    doc.insert("config".into(), Value::Table(to_toml(cfg)));
    doc
}

fn io_err(path: &Path, e: io::Error) -> io::Error {
    io::Error::new(e.kind(), format!("{}: {e}", path.display()))
}

/// Writes every table, the checks and failures, and `metadata.toml`.
/// Returns the paths written.
pub fn emit_results(
    dir: &Path,
    cfg: &ExperimentConfig,
    info: &RunInfo,
    out: Option<&ScenarioOutput>,
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = Vec::new();
    if let Some(o) = out {
        let extra = [o.checks_table(), o.failures_table()];
        for t in o.tables.iter().chain(&extra) {
            let path = dir.join(format!("{}.csv", t.name));
            fs::write(&path, t.to_csv()).map_err(|e| io_err(&path, e))?;
            written.push(path);
        }
    }
    let path = dir.join("metadata.toml");
    let text = toml::to_string(&metadata(cfg, info, out)).map_err(|e| io::Error::other(e.to_string()))?;
    fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::validate_config;

    #[test]
    fn floats_round_trip_through_csv() {
        let mut t = Table::new("x", &["a", "b", "c"]);
        let v = 0.1 + 0.2;
        t.push(vec![3usize.into(), v.into(), "p,q".into()]);
        let csv = t.to_csv();
        assert_eq!(csv.lines().next(), Some("a,b,c"));
        let row = csv.lines().nth(1).unwrap();
        assert!(row.ends_with("\"p,q\""));
        let b: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(b, v);
    }

    #[test]
    fn check_relations() {
        assert!(Check::new("a", 1.0, "<", 2.0).passed);
        assert!(!Check::new("a", 2.0, "<", 2.0).passed);
        assert!(Check::new("a", 2.0, "<=", 2.0).passed);
        assert!(Check::new("a", 3.0, ">", 2.0).passed);
        assert!(!Check::holds("b", false, "").passed);
    }

    #[test]
    fn metadata_only_run_writes_one_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = validate_config("version = 1\nreplicates = 0\n[scenario.linear-gaussian-check]\n").unwrap();
        let files = emit_results(dir.path(), &cfg, &RunInfo::default(), None).unwrap();
        assert_eq!(files, [dir.path().join("metadata.toml")]);
        let text = fs::read_to_string(&files[0]).unwrap();
        assert_eq!(validate_config(&text).unwrap(), cfg);
    }
}
