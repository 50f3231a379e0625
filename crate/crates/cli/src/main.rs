//! `eqclass`: evaluate, optimize, verify, and reproduce equilibrium
//! classification rules from a scenario config file.
//!
//! Exit codes: 0 on success, 2 when `reproduce` finds a table cell outside
//! tolerance, 1 on any error.

mod config;
mod output;
mod reproduce;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use eqclass::binned::{build_bins, refinement_study, solve_binned};
use eqclass::equilibrium::{evaluate, EquilibriumOutcome, ScenarioSpec};
use eqclass::optimizer::{optimize_threshold, optimize_two_cut, OptimizationResult};
use eqclass::oracle::simulate;
use eqclass::rules::Rule;

use config::{parse_config, RunConfig};
use output::{outcome_row, write_csv, write_json, Format, OUTCOME_COLUMNS};
use reproduce::ToleranceProfile;

#[derive(Parser)]
#[command(
    name = "eqclass",
    about = "Equilibrium-optimal classification rules for strategic populations",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario config file (TOML, or JSON when the path ends in .json).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for result files (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Output encoding for single-result commands.
    #[arg(long, global = true, value_enum, default_value = "json")]
    format: Format,

    /// RNG seed for simulation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads for parallel search and simulation (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Tolerance profile for `reproduce` comparisons.
    #[arg(long, global = true, value_enum, default_value = "paper")]
    tolerance_profile: ToleranceProfile,
}

#[derive(Subcommand)]
enum Command {
    /// Equilibrium outcome of the configured rule.
    Evaluate,
    /// Best rule over the certified structured families.
    Optimize,
    /// Discretized (binned) optimum with its structure certificate.
    Binned,
    /// Nested bin-refinement convergence study.
    Refine,
    /// Monte Carlo agent simulation of the configured rule.
    Simulate,
    /// Regenerate the six worked-example tables and compare each cell.
    Reproduce,
    /// Sweep one scenario or rule parameter; writes sweep.csv.
    Sweep,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<u8> {
    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .context("cannot configure worker pool")?;
    }
    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("cannot create output directory {}", cli.out.display()))?;

    match cli.command {
        Command::Evaluate => cmd_evaluate(cli),
        Command::Optimize => cmd_optimize(cli),
        Command::Binned => cmd_binned(cli),
        Command::Refine => cmd_refine(cli),
        Command::Simulate => cmd_simulate(cli),
        Command::Reproduce => {
            let ok = reproduce::run(&cli.out, cli.tolerance_profile)?;
            Ok(if ok { 0 } else { 2 })
        }
        Command::Sweep => cmd_sweep(cli),
    }
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| anyhow!("this command needs --config PATH"))?;
    parse_config(path)
}

#[derive(Serialize)]
struct EvaluateResult<'a> {
    rule: &'a Rule<f64>,
    quota: f64,
    feasible: bool,
    outcome: &'a EquilibriumOutcome<f64>,
}

fn cmd_evaluate(cli: &Cli) -> Result<u8> {
    let cfg = load(cli)?;
    let scenario = cfg.build_scenario()?;
    let rule = cfg.build_rule()?;
    let outcome = evaluate(&rule, &scenario);
    let feasible = outcome.quota_usage <= scenario.quota + 1e-9;
    let path = match cli.format {
        Format::Json => write_json(
            &cli.out,
            "results.json",
            &EvaluateResult {
                rule: &rule,
                quota: scenario.quota,
                feasible,
                outcome: &outcome,
            },
        )?,
        Format::Csv => {
            let header: Vec<String> = OUTCOME_COLUMNS.iter().map(|s| (*s).to_owned()).collect();
            write_csv(
                &cli.out,
                "results.csv",
                &[header, outcome_row(&outcome, scenario.quota)],
            )?
        }
    };
    println!(
        "utility {:.6}, comply {:.4}, cheat {:.4}, noncomply {:.4}, quota usage {:.4} \
         (quota {}, feasible {feasible}) -> {}",
        outcome.utility,
        outcome.shares.comply,
        outcome.shares.cheat,
        outcome.shares.noncomply,
        outcome.quota_usage,
        scenario.quota,
        path.display()
    );
    Ok(0)
}

fn optimization_csv(res: &OptimizationResult<f64>) -> Vec<Vec<String>> {
    let mut rows = vec![vec![
        "family".to_owned(),
        "param_lo".to_owned(),
        "param_hi".to_owned(),
    ]];
    rows[0].extend(OUTCOME_COLUMNS.iter().map(|s| (*s).to_owned()));
    for fam in &res.family_comparison {
        let (lo, hi) = match &fam.rule {
            Rule::PositiveThreshold { tau } | Rule::NegativeThreshold { tau } => {
                (format!("{tau}"), String::new())
            }
            Rule::InnerTwoCut { tau_lo, tau_hi } | Rule::OuterTwoCut { tau_lo, tau_hi } => {
                (format!("{tau_lo}"), format!("{tau_hi}"))
            }
            Rule::Binned { .. } => (String::new(), String::new()),
        };
        let mut row = vec![format!("{:?}", fam.family), lo, hi];
        row.extend(outcome_row(&fam.outcome, f64::INFINITY));
        rows.push(row);
    }
    rows
}

fn cmd_optimize(cli: &Cli) -> Result<u8> {
    let cfg = load(cli)?;
    let scenario = cfg.build_scenario()?;
    let search = cfg
        .search
        .clone()
        .unwrap_or_default()
        .apply(&scenario)?;
    let res = if scenario.has_cheating() {
        optimize_two_cut(&scenario, &search)
    } else {
        optimize_threshold(&scenario, &search)
    }
    .map_err(|e| anyhow!("optimization failed: {e}"))?;
    let path = match cli.format {
        Format::Json => write_json(&cli.out, "results.json", &res)?,
        Format::Csv => write_csv(&cli.out, "results.csv", &optimization_csv(&res))?,
    };
    println!(
        "best rule {:?} with utility {:.6} (feasible {}) -> {}",
        res.best_rule,
        res.outcome.utility,
        res.feasible,
        path.display()
    );
    Ok(0)
}

#[derive(Serialize)]
struct BinnedResult<'a> {
    edges: &'a [f64],
    solution: &'a eqclass::binned::BinnedSolution<f64>,
}

fn cmd_binned(cli: &Cli) -> Result<u8> {
    let cfg = load(cli)?;
    let scenario = cfg.build_scenario()?;
    let bcfg = cfg.binned.clone().unwrap_or_default();
    let (hint_lo, hint_hi) = scenario.signals.support_hint(6.0);
    let interval = (bcfg.lo.unwrap_or(hint_lo), bcfg.hi.unwrap_or(hint_hi));
    let n_inner = bcfg.n_inner.unwrap_or(32);
    let problem = build_bins(&scenario, interval, n_inner)
        .map_err(|e| anyhow!("binning failed: {e}"))?;
    let sol = solve_binned(&problem, scenario.quota).map_err(|e| anyhow!("solver failed: {e}"))?;
    let path = match cli.format {
        Format::Json => write_json(
            &cli.out,
            "results.json",
            &BinnedResult {
                edges: &problem.edges,
                solution: &sol,
            },
        )?,
        Format::Csv => {
            let mut rows = vec![vec![
                "bin".to_owned(),
                "prob".to_owned(),
                "w_sign".to_owned(),
            ]];
            for (j, (&p, &s)) in sol
                .probs
                .iter()
                .zip(&sol.structure.sign_pattern)
                .enumerate()
            {
                rows.push(vec![format!("{j}"), format!("{p}"), format!("{s}")]);
            }
            write_csv(&cli.out, "results.csv", &rows)?
        }
    };
    println!(
        "binned optimum over {} bins: utility {:.6}, lambda {:.6}, certificate {} -> {}",
        sol.probs.len(),
        sol.utility,
        sol.lambda,
        if sol.structure.valid {
            "valid"
        } else {
            "INVALID"
        },
        path.display()
    );
    Ok(0)
}

fn cmd_refine(cli: &Cli) -> Result<u8> {
    let cfg = load(cli)?;
    let scenario = cfg.build_scenario()?;
    let levels = cfg
        .binned
        .clone()
        .unwrap_or_default()
        .levels
        .unwrap_or(8);
    let report = refinement_study(&scenario, scenario.quota, levels)
        .map_err(|e| anyhow!("refinement study failed: {e}"))?;
    let path = match cli.format {
        Format::Json => write_json(&cli.out, "results.json", &report)?,
        Format::Csv => {
            let mut rows = vec![vec![
                "level".to_owned(),
                "n_bins".to_owned(),
                "interval_lo".to_owned(),
                "interval_hi".to_owned(),
                "utility".to_owned(),
                "lambda".to_owned(),
                "sign_changes".to_owned(),
                "certificate_valid".to_owned(),
            ]];
            for level in &report.levels {
                rows.push(vec![
                    format!("{}", level.level),
                    format!("{}", level.n_bins),
                    format!("{}", level.interval.0),
                    format!("{}", level.interval.1),
                    format!("{}", level.utility),
                    format!("{}", level.lambda),
                    format!("{}", level.sign_changes),
                    format!("{}", level.certificate_valid),
                ]);
            }
            write_csv(&cli.out, "results.csv", &rows)?
        }
    };
    let last = report.levels.last().expect("at least two levels");
    println!(
        "{} levels, final utility {:.6} on {} bins -> {}",
        report.levels.len(),
        last.utility,
        last.n_bins,
        path.display()
    );
    Ok(0)
}

fn cmd_simulate(cli: &Cli) -> Result<u8> {
    let cfg = load(cli)?;
    let scenario: ScenarioSpec<f64> = cfg.build_scenario()?;
    let rule = cfg.build_rule()?;
    let n_agents = cfg
        .simulate
        .clone()
        .unwrap_or_default()
        .n_agents
        .unwrap_or(1_000_000);
    let report = simulate(&rule, &scenario, n_agents, cli.seed)
        .map_err(|e| anyhow!("simulation failed: {e}"))?;
    let path = match cli.format {
        Format::Json => write_json(&cli.out, "results.json", &report)?,
        Format::Csv => {
            let mut rows = vec![vec!["metric".to_owned(), "value".to_owned(), "se".to_owned()]];
            let cells = [
                ("comply", report.empirical_shares.comply, None),
                ("noncomply", report.empirical_shares.noncomply, None),
                ("cheat", report.empirical_shares.cheat, None),
                (
                    "tp",
                    report.empirical_confusion.tp,
                    Some(report.standard_errors.tp),
                ),
                (
                    "fn",
                    report.empirical_confusion.fn_,
                    Some(report.standard_errors.fn_),
                ),
                (
                    "fp",
                    report.empirical_confusion.fp,
                    Some(report.standard_errors.fp),
                ),
                (
                    "tn",
                    report.empirical_confusion.tn,
                    Some(report.standard_errors.tn),
                ),
            ];
            for (metric, value, se) in cells {
                rows.push(vec![
                    metric.to_owned(),
                    format!("{value}"),
                    se.map_or(String::new(), |s| format!("{s}")),
                ]);
            }
            write_csv(&cli.out, "results.csv", &rows)?
        }
    };
    println!(
        "{n_agents} agents (seed {}): comply {:.4}, cheat {:.4}, noncomply {:.4} -> {}",
        cli.seed,
        report.empirical_shares.comply,
        report.empirical_shares.cheat,
        report.empirical_shares.noncomply,
        path.display()
    );
    Ok(0)
}

fn cmd_sweep(cli: &Cli) -> Result<u8> {
    let cfg = load(cli)?;
    let scenario = cfg.build_scenario()?;
    let sweep_cfg = cfg
        .sweep
        .clone()
        .ok_or_else(|| anyhow!("the sweep command needs a [sweep] section in the config"))?;
    let rule = cfg.build_rule()?;
    let path = sweep::run(&sweep_cfg, &scenario, &rule, &cli.out)?;
    println!(
        "swept {} over [{}, {}] in {} steps -> {}",
        sweep_cfg.param,
        sweep_cfg.lo,
        sweep_cfg.hi,
        sweep_cfg.n,
        path.display()
    );
    Ok(0)
}
