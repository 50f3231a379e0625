//! End-to-end tests of the `eqclass` binary: exit codes, error wording,
//! and the files each subcommand writes.

use std::path::{Path, PathBuf};

use assert_cmd::Command;
use predicates::prelude::*;
use tempfile::TempDir;

fn bin() -> Command {
    Command::cargo_bin("eqclass").expect("binary builds")
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn read_json(dir: &Path, name: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join(name)).expect("output file exists");
    serde_json::from_str(&text).expect("output file is valid JSON")
}

fn read_csv(dir: &Path, name: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(dir.join(name)).expect("output file exists");
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .expect("non-empty csv")
        .split(',')
        .map(str::to_owned)
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect();
    (header, rows)
}

fn col(header: &[String], name: &str) -> usize {
    header
        .iter()
        .position(|h| h == name)
        .unwrap_or_else(|| panic!("column {name} missing from {header:?}"))
}

#[test]
fn missing_config_is_a_usage_error() {
    bin()
        .arg("evaluate")
        .assert()
        .code(1)
        .stderr(predicate::str::contains("--config"));
}

#[test]
fn ambiguous_spread_is_rejected() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(
        &path,
        r#"
[scenario]
reward = 4.0
[scenario.cost]
mean = 0.0
sd = 1.0
variance = 1.0
[scenario.signals.g0]
mean = 0.0
sd = 1.0
[scenario.signals.g1]
mean = 1.0
sd = 1.0
[scenario.payoff]
preset = "accuracy"
"#,
    )
    .unwrap();
    bin()
        .args(["evaluate", "--config"])
        .arg(&path)
        .assert()
        .code(1)
        .stderr(
            predicate::str::contains("sd")
                .and(predicate::str::contains("variance")),
        );
}

#[test]
fn mlrp_violation_names_the_offending_pair() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("mlrp.toml");
    // Equal means with unequal spreads: the g1/g0 likelihood ratio is
    // not monotone, so validation must point at that pair.
    std::fs::write(
        &path,
        r#"
[scenario]
reward = 4.0
[scenario.cost]
mean = 0.0
sd = 1.0
[scenario.signals.g0]
mean = 0.0
sd = 1.0
[scenario.signals.g1]
mean = 1.0
sd = 2.0
[scenario.payoff]
preset = "accuracy"
"#,
    )
    .unwrap();
    bin()
        .args(["evaluate", "--config"])
        .arg(&path)
        .assert()
        .code(1)
        .stderr(predicate::str::contains("g1/g0"));
}

#[test]
fn evaluate_writes_results_json() {
    let dir = TempDir::new().unwrap();
    bin()
        .args(["evaluate", "--config"])
        .arg(bundled("example1.toml"))
        .arg("--out")
        .arg(dir.path())
        .assert()
        .success();
    let v = read_json(dir.path(), "results.json");
    assert_eq!(v["rule"]["variant"], "negative_threshold");
    assert_eq!(v["feasible"], true);
    let utility = v["outcome"]["utility"].as_f64().unwrap();
    assert!(
        (utility - 0.8696).abs() < 1e-3,
        "utility at tau=-1.55 should be about 0.8696, got {utility}"
    );
}

#[test]
fn evaluate_csv_has_the_flat_outcome_columns() {
    let dir = TempDir::new().unwrap();
    bin()
        .args(["evaluate", "--format", "csv", "--config"])
        .arg(bundled("example1.toml"))
        .arg("--out")
        .arg(dir.path())
        .assert()
        .success();
    let (header, rows) = read_csv(dir.path(), "results.csv");
    for name in ["comply", "cheat", "utility", "quota_usage", "feasible"] {
        col(&header, name);
    }
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][col(&header, "feasible")], "true");
}

#[test]
fn optimize_prefers_the_outer_two_cut_when_cheating_is_possible() {
    let dir = TempDir::new().unwrap();
    bin()
        .args(["optimize", "--config"])
        .arg(bundled("example2.toml"))
        .arg("--out")
        .arg(dir.path())
        .assert()
        .success();
    let v = read_json(dir.path(), "results.json");
    assert_eq!(v["best_rule"]["variant"], "outer_two_cut");
    let utility = v["outcome"]["utility"].as_f64().unwrap();
    assert!(
        (utility - 0.6215).abs() < 5e-3,
        "outer two-cut optimum should be about 0.6215, got {utility}"
    );
}

#[test]
fn reproduce_passes_under_the_paper_profile() {
    let dir = TempDir::new().unwrap();
    bin()
        .args(["reproduce", "--out"])
        .arg(dir.path())
        .assert()
        .code(0)
        .stdout(predicate::str::contains("all within tolerance"));
    for table in 3..=8 {
        assert!(
            dir.path().join(format!("table{table}.csv")).exists(),
            "table{table}.csv missing"
        );
    }
    assert!(dir.path().join("summary.txt").exists());
}

#[test]
fn reproduce_flags_the_known_deviation_under_strict() {
    let dir = TempDir::new().unwrap();
    bin()
        .args(["reproduce", "--tolerance-profile", "strict", "--out"])
        .arg(dir.path())
        .assert()
        .code(2)
        .stdout(predicate::str::contains("MISMATCH"));
}

#[test]
fn tau_sweep_stays_feasible_and_finds_the_low_threshold_optimum() {
    let dir = TempDir::new().unwrap();
    bin()
        .args(["sweep", "--config"])
        .arg(bundled("example1.toml"))
        .arg("--out")
        .arg(dir.path())
        .assert()
        .success();
    let (header, rows) = read_csv(dir.path(), "sweep.csv");
    assert_eq!(rows.len(), 801);
    let (v_col, u_col, q_col) = (
        col(&header, "value"),
        col(&header, "utility"),
        col(&header, "quota_usage"),
    );
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    for row in &rows {
        let usage: f64 = row[q_col].parse().unwrap();
        assert!(usage <= 1.0 + 1e-9, "quota exceeded in sweep row: {row:?}");
        let utility: f64 = row[u_col].parse().unwrap();
        if utility > best.0 {
            best = (utility, row[v_col].parse().unwrap());
        }
    }
    assert!(
        (best.0 - 0.8696).abs() < 1e-3 && (best.1 + 1.55).abs() < 0.05,
        "sweep optimum should be about 0.8696 near tau=-1.55, got {best:?}"
    );
}

#[test]
fn kappa_sweep_shows_cheating_falling_as_it_gets_costlier() {
    let dir = TempDir::new().unwrap();
    bin()
        .args(["sweep", "--config"])
        .arg(bundled("example2.toml"))
        .arg("--out")
        .arg(dir.path())
        .assert()
        .success();
    let (header, rows) = read_csv(dir.path(), "sweep.csv");
    let c_col = col(&header, "cheat");
    let mut prev = f64::INFINITY;
    for row in &rows {
        let cheat: f64 = row[c_col].parse().unwrap();
        assert!(
            cheat <= prev + 1e-9,
            "cheating share should weakly decrease in kappa"
        );
        prev = cheat;
    }
    let last: f64 = rows.last().unwrap()[c_col].parse().unwrap();
    assert!(last < 1e-9, "kappa = 1 leaves no incentive to cheat");
}

#[test]
fn signal_sweep_writes_the_density_overlay() {
    let dir = TempDir::new().unwrap();
    bin()
        .args(["sweep", "--config"])
        .arg(bundled("example3.toml"))
        .arg("--out")
        .arg(dir.path())
        .assert()
        .success();
    let (header, rows) = read_csv(dir.path(), "sweep.csv");
    assert_eq!(
        header,
        ["s", "g0_pdf", "g_chi_pdf", "g1_pdf", "accept_prob"]
    );
    assert_eq!(rows.len(), 501);
    for row in &rows {
        for idx in 1..5 {
            let v: f64 = row[idx].parse().unwrap();
            assert!(v >= 0.0, "densities and accept_prob are nonnegative");
        }
    }
}

#[test]
fn simulate_reports_shares_close_to_the_analytic_ones() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("sim.toml");
    let base = std::fs::read_to_string(bundled("example1.toml")).unwrap();
    std::fs::write(&cfg, format!("{base}\n[simulate]\nn_agents = 50000\n")).unwrap();
    bin()
        .args(["simulate", "--seed", "7", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .assert()
        .success();
    let v = read_json(dir.path(), "results.json");
    let comply = v["empirical_shares"]["comply"].as_f64().unwrap();
    assert!(
        (comply - 0.0747).abs() < 0.01,
        "empirical comply share should be near 0.0747, got {comply}"
    );
}

#[test]
fn binned_solution_is_certified_on_the_baseline_example() {
    let dir = TempDir::new().unwrap();
    bin()
        .args(["binned", "--config"])
        .arg(bundled("example1.toml"))
        .arg("--out")
        .arg(dir.path())
        .assert()
        .success()
        .stdout(predicate::str::contains("certificate valid"));
    let v = read_json(dir.path(), "results.json");
    assert_eq!(v["solution"]["structure"]["valid"], true);
    let utility = v["solution"]["utility"].as_f64().unwrap();
    assert!(
        utility >= 0.8696 - 2e-3,
        "34-bin optimum should be close to the continuous one, got {utility}"
    );
}
