//! Config-file schema and validation.
//!
//! The primary encoding is TOML; a file ending in `.json` is parsed as
//! JSON with the same schema. Every scenario invariant (positive reward,
//! quota in (0, 1], kappa in [0, 1], MLRP) is checked at parse time so
//! commands start from a valid model or not at all.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use eqclass::dist::{Distribution, SignalModel};
use eqclass::equilibrium::{objective_preset, DesignerPayoff, ObjectivePreset, ScenarioSpec};
use eqclass::optimizer::SearchConfig;
use eqclass::rules::Rule;

/// Top-level config file contents.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<RuleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<SearchOverrides>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binned: Option<BinnedConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub reward: f64,
    #[serde(default = "default_quota")]
    pub quota: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    pub cost: DistConfig,
    pub signals: SignalsConfig,
    pub payoff: PayoffConfig,
}

fn default_quota() -> f64 {
    1.0
}

/// A Gaussian, with the spread given as either `sd` or `variance`
/// (exactly one of the two).
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DistConfig {
    #[serde(default = "default_family")]
    pub family: String,
    pub mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
}

fn default_family() -> String {
    "gaussian".to_owned()
}

impl DistConfig {
    fn build(&self, what: &str) -> Result<Distribution<f64>> {
        if self.family != "gaussian" {
            bail!("{what}: unsupported distribution family {:?}", self.family);
        }
        let sd = match (self.sd, self.variance) {
            (Some(sd), None) => sd,
            (None, Some(var)) => {
                if !(var > 0.0) {
                    bail!("{what}: variance must be positive, got {var}");
                }
                var.sqrt()
            }
            (Some(_), Some(_)) => {
                bail!("{what}: give either `sd` or `variance`, not both")
            }
            (None, None) => bail!("{what}: missing spread; give `sd` or `variance`"),
        };
        Distribution::gaussian(self.mean, sd).map_err(|e| anyhow!("{what}: {e}"))
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SignalsConfig {
    pub g0: DistConfig,
    pub g1: DistConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_chi: Option<DistConfig>,
}

/// Either a named preset (`accuracy`, `compliance`, `predatory`,
/// `p_precision` with `p`) or an explicit payoff matrix.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PayoffConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b1: Option<f64>,
}

impl PayoffConfig {
    fn build(&self) -> Result<DesignerPayoff<f64>> {
        match (&self.preset, self.a1, self.a0, self.b0, self.b1) {
            (Some(name), None, None, None, None) => {
                let preset = match name.as_str() {
                    "accuracy" => ObjectivePreset::Accuracy,
                    "compliance" => ObjectivePreset::Compliance,
                    "predatory" => ObjectivePreset::Predatory,
                    "p_precision" => ObjectivePreset::PPrecision(
                        self.p
                            .ok_or_else(|| anyhow!("payoff: preset p_precision needs `p`"))?,
                    ),
                    other => bail!("payoff: unknown preset {other:?}"),
                };
                objective_preset(preset).map_err(|e| anyhow!("payoff: {e}"))
            }
            (None, Some(a1), Some(a0), Some(b0), Some(b1)) => {
                if self.p.is_some() {
                    bail!("payoff: `p` is only meaningful with preset p_precision");
                }
                DesignerPayoff::new(a1, a0, b0, b1).map_err(|e| anyhow!("payoff: {e}"))
            }
            _ => bail!(
                "payoff: give either `preset` (with `p` for p_precision) or the \
                 full matrix `a1`, `a0`, `b0`, `b1`"
            ),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RuleConfig {
    /// One of `positive_threshold`, `negative_threshold`, `inner_two_cut`,
    /// `outer_two_cut`, `binned`.
    pub variant: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
}

impl RuleConfig {
    pub fn build(&self) -> Result<Rule<f64>> {
        let tau = || self.tau.ok_or_else(|| anyhow!("rule: missing `tau`"));
        let cuts = || -> Result<(f64, f64)> {
            Ok((
                self.tau_lo.ok_or_else(|| anyhow!("rule: missing `tau_lo`"))?,
                self.tau_hi.ok_or_else(|| anyhow!("rule: missing `tau_hi`"))?,
            ))
        };
        let rule = match self.variant.as_str() {
            "positive_threshold" => Rule::positive_threshold(tau()?),
            "negative_threshold" => Rule::negative_threshold(tau()?),
            "inner_two_cut" => {
                let (lo, hi) = cuts()?;
                Rule::inner_two_cut(lo, hi).map_err(|e| anyhow!("rule: {e}"))?
            }
            "outer_two_cut" => {
                let (lo, hi) = cuts()?;
                Rule::outer_two_cut(lo, hi).map_err(|e| anyhow!("rule: {e}"))?
            }
            "binned" => Rule::binned(
                self.edges
                    .clone()
                    .ok_or_else(|| anyhow!("rule: missing `edges`"))?,
                self.probs
                    .clone()
                    .ok_or_else(|| anyhow!("rule: missing `probs`"))?,
            )
            .map_err(|e| anyhow!("rule: {e}"))?,
            other => bail!("rule: unknown variant {other:?}"),
        };
        Ok(rule)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SearchOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coarse_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine_iters: Option<usize>,
}

impl SearchOverrides {
    pub fn apply(&self, scenario: &ScenarioSpec<f64>) -> Result<SearchConfig<f64>> {
        let mut config = SearchConfig::for_scenario(scenario);
        if let Some(lo) = self.grid_lo {
            config.grid_lo = lo;
        }
        if let Some(hi) = self.grid_hi {
            config.grid_hi = hi;
        }
        if let Some(n) = self.coarse_points {
            config.coarse_points = n;
        }
        if let Some(n) = self.refine_iters {
            config.refine_iters = n;
        }
        config.validate().map_err(|e| anyhow!("search: {e}"))?;
        Ok(config)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BinnedConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_inner: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_agents: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// One of `tau`, `kappa`, `r`, `q`, `mu0`, `mu_chi`, `mu1`, `signal`.
    pub param: String,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

/// Reads and validates a config file (TOML, or JSON for `.json` paths).
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let config: RunConfig = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text)
            .with_context(|| format!("invalid JSON config {}", path.display()))?
    } else {
        toml::from_str(&text).with_context(|| format!("invalid TOML config {}", path.display()))?
    };
    // Surface scenario invariant violations at parse time.
    config.build_scenario()?;
    Ok(config)
}

impl RunConfig {
    /// Builds and fully validates the scenario, including MLRP.
    pub fn build_scenario(&self) -> Result<ScenarioSpec<f64>> {
        let sc = &self.scenario;
        let cost = sc.cost.build("scenario.cost")?;
        let g0 = sc.signals.g0.build("scenario.signals.g0")?;
        let g1 = sc.signals.g1.build("scenario.signals.g1")?;
        let g_chi = sc
            .signals
            .g_chi
            .as_ref()
            .map(|d| d.build("scenario.signals.g_chi"))
            .transpose()?;
        let payoff = sc.payoff.build()?;
        let signals = match g_chi {
            Some(gc) => SignalModel::with_cheating(g0, gc, g1),
            None => SignalModel::baseline(g0, g1),
        };
        check_mlrp(&signals)?;
        let scenario = match sc.kappa {
            Some(kappa) => {
                ScenarioSpec::with_cheating(cost, signals, sc.reward, payoff, sc.quota, kappa)
            }
            None => ScenarioSpec::baseline(cost, signals, sc.reward, payoff, sc.quota),
        }
        .map_err(|e| anyhow!("scenario: {e}"))?;
        Ok(scenario)
    }

    pub fn build_rule(&self) -> Result<Rule<f64>> {
        self.rule
            .as_ref()
            .ok_or_else(|| anyhow!("this command needs a [rule] section in the config"))?
            .build()
    }
}

/// Checks each required likelihood-ratio pair separately so a failure
/// names the offending pair.
fn check_mlrp(signals: &SignalModel<f64>) -> Result<()> {
    let pairs: Vec<(&str, SignalModel<f64>)> = match &signals.g_chi {
        None => vec![("g1/g0", SignalModel::baseline(signals.g0, signals.g1))],
        Some(gc) => vec![
            ("g1/g_chi", SignalModel::baseline(*gc, signals.g1)),
            ("g_chi/g0", SignalModel::baseline(signals.g0, *gc)),
            ("g1/g0", SignalModel::baseline(signals.g0, signals.g1)),
        ],
    };
    for (name, pair) in pairs {
        let ok = pair
            .check_mlrp_default()
            .map_err(|e| anyhow!("scenario.signals: {e}"))?;
        if !ok {
            bail!(
                "scenario.signals: model rejected, likelihood ratio {name} is \
                 not strictly increasing (MLRP violated)"
            );
        }
    }
    Ok(())
}
