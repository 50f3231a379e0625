//! Parameter sweeps exported as tidy CSV for external plotting.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Result};

use eqclass::dist::Distribution;
use eqclass::equilibrium::{evaluate, ScenarioSpec};
use eqclass::rules::Rule;

use crate::config::SweepConfig;
use crate::output::{outcome_row, write_csv, OUTCOME_COLUMNS};

fn with_mean(d: &Distribution<f64>, mean: f64) -> Result<Distribution<f64>> {
    Distribution::gaussian(mean, d.scale()).map_err(|e| anyhow!("sweep: {e}"))
}

fn with_tau(rule: &Rule<f64>, tau: f64) -> Result<Rule<f64>> {
    match rule {
        Rule::PositiveThreshold { .. } => Ok(Rule::positive_threshold(tau)),
        Rule::NegativeThreshold { .. } => Ok(Rule::negative_threshold(tau)),
        other => bail!("sweep: `tau` sweeps need a threshold rule, got {other:?}"),
    }
}

/// Runs the sweep and writes `sweep.csv` under `out_dir`.
pub fn run(
    sweep: &SweepConfig,
    scenario: &ScenarioSpec<f64>,
    rule: &Rule<f64>,
    out_dir: &Path,
) -> Result<PathBuf> {
    if sweep.n < 2 {
        bail!("sweep: need at least 2 grid points, got {}", sweep.n);
    }
    if !(sweep.lo < sweep.hi) {
        bail!("sweep: need lo < hi, got ({}, {})", sweep.lo, sweep.hi);
    }
    let grid = (0..sweep.n).map(|i| {
        sweep.lo + (sweep.hi - sweep.lo) * (i as f64) / ((sweep.n - 1) as f64)
    });

    // Density overlay: per-behavior signal densities and the acceptance
    // probability along the signal axis.
    if sweep.param == "signal" {
        let mut rows = vec![vec![
            "s".into(),
            "g0_pdf".into(),
            "g_chi_pdf".into(),
            "g1_pdf".into(),
            "accept_prob".into(),
        ]];
        for s in grid {
            rows.push(vec![
                format!("{s}"),
                format!("{}", scenario.signals.g0.pdf(s)),
                scenario
                    .signals
                    .g_chi
                    .as_ref()
                    .map_or(String::new(), |g| format!("{}", g.pdf(s))),
                format!("{}", scenario.signals.g1.pdf(s)),
                format!("{}", rule.accept_prob(s)),
            ]);
        }
        return write_csv(out_dir, "sweep.csv", &rows);
    }

    let mut header = vec!["param".to_owned(), "value".to_owned()];
    header.extend(OUTCOME_COLUMNS.iter().map(|s| (*s).to_owned()));
    let mut rows = vec![header];
    for value in grid {
        let mut sc = scenario.clone();
        let mut r = rule.clone();
        match sweep.param.as_str() {
            "tau" => r = with_tau(rule, value)?,
            "kappa" => {
                if sc.kappa.is_none() {
                    bail!("sweep: `kappa` sweeps need a cheating scenario");
                }
                sc.kappa = Some(value);
            }
            "r" => sc.reward = value,
            "q" => sc.quota = value,
            "mu0" => sc.signals.g0 = with_mean(&scenario.signals.g0, value)?,
            "mu1" => sc.signals.g1 = with_mean(&scenario.signals.g1, value)?,
            "mu_chi" => {
                let gc = scenario
                    .signals
                    .g_chi
                    .as_ref()
                    .ok_or_else(|| anyhow!("sweep: `mu_chi` needs a cheating scenario"))?;
                sc.signals.g_chi = Some(with_mean(gc, value)?);
            }
            other => bail!(
                "sweep: unknown param {other:?}; expected one of tau, kappa, r, q, \
                 mu0, mu_chi, mu1, signal"
            ),
        }
        sc.validate()
            .map_err(|e| anyhow!("sweep: value {value} rejected: {e}"))?;
        let out = evaluate(&r, &sc);
        let mut row = vec![sweep.param.clone(), format!("{value}")];
        row.extend(outcome_row(&out, sc.quota));
        rows.push(row);
    }
    write_csv(out_dir, "sweep.csv", &rows)
}
