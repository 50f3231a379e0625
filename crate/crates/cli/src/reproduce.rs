//! Regenerates the six worked-example tables and compares every cell
//! against its published value.

use std::path::Path;

use anyhow::{anyhow, Result};

use eqclass::equilibrium::{evaluate, EquilibriumOutcome, ScenarioSpec};
use eqclass::optimizer::{optimize_threshold, RuleFamily, SearchConfig};
use eqclass::rules::Rule;
use eqclass::scenarios::{example_1, example_2, example_3};

use crate::output::write_csv;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ToleranceProfile {
    /// Published tolerances: 1 percentage point per cell, thresholds to
    /// 0.05, and a documented widening for the one table cell whose
    /// published value is inconsistent with its row sum.
    Paper,
    /// 1 percentage point and 0.05 everywhere, no exemptions.
    Strict,
}

struct Cell {
    table: u8,
    rule: &'static str,
    metric: &'static str,
    paper: f64,
    computed: f64,
    tol: f64,
    note: &'static str,
}

impl Cell {
    fn ok(&self) -> bool {
        (self.computed - self.paper).abs() <= self.tol
    }
}

const PCT: f64 = 1.0;
const TAU: f64 = 0.05;
/// The published outer two-cut FP cell does not fit its own row sum; the
/// recomputed value is about 2.3 points higher, restoring the unit total.
const ERRATUM: f64 = 3.0;

fn pct(x: f64) -> f64 {
    x * 100.0
}

fn threshold_tau(rule: &Rule<f64>) -> Result<f64> {
    match rule {
        Rule::PositiveThreshold { tau } | Rule::NegativeThreshold { tau } => Ok(*tau),
        other => Err(anyhow!("expected a threshold rule, got {other:?}")),
    }
}

fn family_best<'a>(
    res: &'a eqclass::optimizer::OptimizationResult<f64>,
    family: RuleFamily,
) -> Result<&'a eqclass::optimizer::FamilyBest<f64>> {
    res.family_comparison
        .iter()
        .find(|f| f.family == family)
        .ok_or_else(|| anyhow!("optimizer result is missing family {family:?}"))
}

fn summary_cells(
    table: u8,
    rule: &'static str,
    rows: &[(&'static str, f64, f64, &'static str)],
) -> Vec<Cell> {
    rows.iter()
        .map(|&(metric, paper, computed, note)| Cell {
            table,
            rule,
            metric,
            paper,
            computed,
            tol: PCT,
            note,
        })
        .collect()
}

fn confusion_cells(
    table: u8,
    rule: &'static str,
    out: &EquilibriumOutcome<f64>,
    paper: [f64; 4],
) -> Vec<Cell> {
    let computed = [
        pct(out.confusion.tp),
        pct(out.confusion.fn_),
        pct(out.confusion.fp),
        pct(out.confusion.tn),
    ];
    ["tp", "fn", "fp", "tn"]
        .into_iter()
        .zip(paper)
        .zip(computed)
        .map(|((metric, paper), computed)| Cell {
            table,
            rule,
            metric,
            paper,
            computed,
            tol: PCT,
            note: "",
        })
        .collect()
}

fn collect_cells(profile: ToleranceProfile) -> Result<Vec<Cell>> {
    let mut cells: Vec<Cell> = Vec::new();

    // Worked example 1: threshold rules under the accuracy objective.
    let ex1: ScenarioSpec<f64> = example_1();
    let res1 = optimize_threshold(&ex1, &SearchConfig::for_scenario(&ex1))
        .map_err(|e| anyhow!("example 1 optimization: {e}"))?;
    let pos1 = family_best(&res1, RuleFamily::PositiveThreshold)?;
    let neg1 = family_best(&res1, RuleFamily::NegativeThreshold)?;
    for (rule, best, tau, acc, comp) in [
        ("positive_threshold", pos1, -0.26, 85.0, 91.0),
        ("negative_threshold", neg1, -1.55, 87.0, 7.0),
    ] {
        cells.push(Cell {
            table: 3,
            rule,
            metric: "tau",
            paper: tau,
            computed: threshold_tau(&best.rule)?,
            tol: TAU,
            note: "",
        });
        cells.extend(summary_cells(
            3,
            rule,
            &[
                ("accuracy", acc, pct(best.outcome.utility), ""),
                ("compliance", comp, pct(best.outcome.shares.comply), ""),
            ],
        ));
    }
    cells.extend(confusion_cells(
        4,
        "positive_threshold",
        &pos1.outcome,
        [82.0, 9.0, 5.0, 3.0],
    ));
    cells.extend(confusion_cells(
        4,
        "negative_threshold",
        &neg1.outcome,
        [0.0, 7.0, 6.0, 87.0],
    ));

    // Worked example 2: positive threshold vs the published outer two-cut.
    let ex2 = example_2();
    let res2 = optimize_threshold(&ex2, &SearchConfig::for_scenario(&ex2))
        .map_err(|e| anyhow!("example 2 optimization: {e}"))?;
    let pos2 = family_best(&res2, RuleFamily::PositiveThreshold)?;
    let outer = evaluate(
        &Rule::outer_two_cut(-0.04, 1.28).expect("valid cuts"),
        &ex2,
    );
    cells.push(Cell {
        table: 5,
        rule: "positive_threshold",
        metric: "tau",
        paper: 1.11,
        computed: threshold_tau(&pos2.rule)?,
        tol: TAU,
        note: "",
    });
    cells.extend(summary_cells(
        5,
        "positive_threshold",
        &[
            ("accuracy", 61.0, pct(pos2.outcome.utility), ""),
            ("compliance", 65.0, pct(pos2.outcome.shares.comply), ""),
            ("cheating", 35.0, pct(pos2.outcome.shares.cheat), ""),
        ],
    ));
    cells.extend(summary_cells(
        5,
        "outer_two_cut",
        &[
            ("accuracy", 62.0, pct(outer.utility), ""),
            ("compliance", 63.0, pct(outer.shares.comply), ""),
            ("cheating", 21.0, pct(outer.shares.cheat), ""),
        ],
    ));
    cells.extend(confusion_cells(
        6,
        "positive_threshold",
        &pos2.outcome,
        [52.0, 12.0, 26.0, 9.0],
    ));
    let mut outer_cells = confusion_cells(6, "outer_two_cut", &outer, [49.0, 14.0, 22.0, 13.0]);
    if profile == ToleranceProfile::Paper {
        for cell in &mut outer_cells {
            if cell.metric == "fp" {
                cell.tol = ERRATUM;
                cell.note = "published cell inconsistent with row sum; see README";
            }
        }
    }
    cells.extend(outer_cells);

    // Worked example 3: negative threshold vs the published inner two-cut.
    let ex3 = example_3();
    let res3 = optimize_threshold(&ex3, &SearchConfig::for_scenario(&ex3))
        .map_err(|e| anyhow!("example 3 optimization: {e}"))?;
    let neg3 = family_best(&res3, RuleFamily::NegativeThreshold)?;
    let inner = evaluate(&Rule::inner_two_cut(0.85, 1.08).expect("valid cuts"), &ex3);
    cells.push(Cell {
        table: 7,
        rule: "negative_threshold",
        metric: "tau",
        paper: -1.5,
        computed: threshold_tau(&neg3.rule)?,
        tol: TAU,
        note: "",
    });
    cells.extend(summary_cells(
        7,
        "negative_threshold",
        &[
            ("accuracy", 87.0, pct(neg3.outcome.utility), ""),
            ("compliance", 6.5, pct(neg3.outcome.shares.comply), ""),
            ("cheating", 0.0, pct(neg3.outcome.shares.cheat), ""),
        ],
    ));
    cells.extend(summary_cells(
        7,
        "inner_two_cut",
        &[
            ("accuracy", 88.0, pct(inner.utility), ""),
            ("compliance", 6.5, pct(inner.shares.comply), ""),
            ("cheating", 18.0, pct(inner.shares.cheat), ""),
        ],
    ));
    cells.extend(confusion_cells(
        8,
        "negative_threshold",
        &neg3.outcome,
        [0.0, 7.0, 6.0, 87.0],
    ));
    cells.extend(confusion_cells(
        8,
        "inner_two_cut",
        &inner,
        [0.0, 6.0, 6.0, 88.0],
    ));

    Ok(cells)
}

/// Regenerates table3.csv..table8.csv plus summary.txt under `out_dir`.
/// Returns true when every cell is within its tolerance.
pub fn run(out_dir: &Path, profile: ToleranceProfile) -> Result<bool> {
    let cells = collect_cells(profile)?;

    for table in 3u8..=8 {
        let mut rows = vec![vec![
            "rule".into(),
            "metric".into(),
            "paper".into(),
            "computed".into(),
            "deviation".into(),
            "within_tolerance".into(),
        ]];
        for cell in cells.iter().filter(|c| c.table == table) {
            rows.push(vec![
                cell.rule.into(),
                cell.metric.into(),
                format!("{}", cell.paper),
                format!("{:.4}", cell.computed),
                format!("{:.4}", (cell.computed - cell.paper).abs()),
                format!("{}", cell.ok()),
            ]);
        }
        write_csv(out_dir, &format!("table{table}.csv"), &rows)?;
    }

    let mut all_ok = true;
    let mut summary = String::new();
    for cell in &cells {
        let ok = cell.ok();
        all_ok &= ok;
        let verdict = if ok { "ok" } else { "MISMATCH" };
        summary.push_str(&format!(
            "table {} {:>19} {:>10}: paper {:>6} computed {:>8.4} [{}]{}{}\n",
            cell.table,
            cell.rule,
            cell.metric,
            cell.paper,
            cell.computed,
            verdict,
            if cell.note.is_empty() { "" } else { " — " },
            cell.note,
        ));
    }
    summary.push_str(&format!(
        "\n{} cells checked, {}\n",
        cells.len(),
        if all_ok {
            "all within tolerance".to_owned()
        } else {
            format!(
                "{} mismatched",
                cells.iter().filter(|c| !c.ok()).count()
            )
        }
    ));
    std::fs::write(out_dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(all_ok)
}
