//! Flat-file writers shared by the subcommands.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use eqclass::equilibrium::EquilibriumOutcome;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Writes `value` as pretty JSON to `dir/name` and returns the path.
pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(&path, text + "\n")
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

/// Writes CSV rows (first row is the header) to `dir/name`.
pub fn write_csv(dir: &Path, name: &str, rows: &[Vec<String>]) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut text = String::new();
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(path)
}

/// Column names of the flattened equilibrium outcome, in CSV order.
pub const OUTCOME_COLUMNS: [&str; 16] = [
    "comply",
    "noncomply",
    "cheat",
    "s0",
    "s1",
    "s_chi",
    "delta",
    "delta_1chi",
    "delta_chi0",
    "tp",
    "fn",
    "fp",
    "tn",
    "utility",
    "quota_usage",
    "feasible",
];

/// One CSV row for an outcome; optional fields are blank when absent.
pub fn outcome_row(out: &EquilibriumOutcome<f64>, quota: f64) -> Vec<String> {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
    vec![
        format!("{}", out.shares.comply),
        format!("{}", out.shares.noncomply),
        format!("{}", out.shares.cheat),
        format!("{}", out.rewards.s0),
        format!("{}", out.rewards.s1),
        opt(out.rewards.s_chi),
        format!("{}", out.incentives.delta),
        opt(out.incentives.delta_1chi),
        opt(out.incentives.delta_chi0),
        format!("{}", out.confusion.tp),
        format!("{}", out.confusion.fn_),
        format!("{}", out.confusion.fp),
        format!("{}", out.confusion.tn),
        format!("{}", out.utility),
        format!("{}", out.quota_usage),
        format!("{}", out.quota_usage <= quota + 1e-9),
    ]
}
