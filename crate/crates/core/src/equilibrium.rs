//! Population best response and designer-side evaluation of a rule.
//!
//! Given a rule, each individual compares the payoffs of complying (full
//! cost `c`), cheating (fractional cost `kappa * c`, available only when a
//! cheat signal distribution is modeled), and not complying (free). The
//! module computes the induced behavior shares, the confusion-matrix cell
//! masses, designer utility, and quota usage.

use serde::{Deserialize, Serialize};

use crate::dist::{CostDistribution, SignalModel};
use crate::error::{Error, Result};
use crate::rules::{RewardProbabilities, Rule};
use crate::scalar::Real;

/// Marginal designer values for the four confusion cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignerPayoff<R> {
    /// Value of a true positive (complier rewarded).
    pub a1: R,
    /// Value of a false negative (complier denied).
    pub a0: R,
    /// Value of a false positive (non-complier or cheater rewarded).
    pub b0: R,
    /// Value of a true negative (non-complier or cheater denied).
    pub b1: R,
}

impl<R: Real> DesignerPayoff<R> {
    pub fn new(a1: R, a0: R, b0: R, b1: R) -> Result<Self> {
        for (name, v) in [("a1", a1), ("a0", a0), ("b0", b0), ("b1", b1)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "designer payoff {name} must be finite, got {v}"
                )));
            }
        }
        Ok(Self { a1, a0, b0, b1 })
    }
}

/// Named payoff-matrix presets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ObjectivePreset<R> {
    /// Reward correct cells only: (1, 0, 0, 1).
    Accuracy,
    /// Reward compliers regardless of classification: (1, 1, 0, 0).
    Compliance,
    /// Accuracy blended with a weight `p` on denials: (1, p, 0, p).
    PPrecision(R),
    /// Value only denials of non-compliers: (0, 0, 0, 1).
    Predatory,
}

/// The payoff matrix for a named preset.
pub fn objective_preset<R: Real>(preset: ObjectivePreset<R>) -> Result<DesignerPayoff<R>> {
    let (zero, one) = (R::zero(), R::one());
    match preset {
        ObjectivePreset::Accuracy => DesignerPayoff::new(one, zero, zero, one),
        ObjectivePreset::Compliance => DesignerPayoff::new(one, one, zero, zero),
        ObjectivePreset::PPrecision(p) => {
            if !(p > zero && p < one) {
                return Err(Error::InvalidParameter(format!(
                    "p-precision weight must lie in (0, 1), got {p}"
                )));
            }
            DesignerPayoff::new(one, p, zero, p)
        }
        ObjectivePreset::Predatory => DesignerPayoff::new(zero, zero, zero, one),
    }
}

/// Complete model primitives for one problem instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec<R> {
    /// Cost distribution F over the population.
    pub cost: CostDistribution<R>,
    /// Behavior-conditional signal distributions.
    pub signals: SignalModel<R>,
    /// Reward for a positive classification, `r > 0`.
    pub reward: R,
    /// Designer payoff matrix.
    pub payoff: DesignerPayoff<R>,
    /// Quota on the expected rewarded fraction, in (0, 1].
    pub quota: R,
    /// Cheating cost factor in [0, 1]; present iff cheating is modeled.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<R>,
}

impl<R: Real> ScenarioSpec<R> {
    /// A scenario without cheating.
    pub fn baseline(
        cost: CostDistribution<R>,
        signals: SignalModel<R>,
        reward: R,
        payoff: DesignerPayoff<R>,
        quota: R,
    ) -> Result<Self> {
        let s = Self {
            cost,
            signals,
            reward,
            payoff,
            quota,
            kappa: None,
        };
        s.validate()?;
        Ok(s)
    }

    /// A scenario with the cheating behavior available.
    pub fn with_cheating(
        cost: CostDistribution<R>,
        signals: SignalModel<R>,
        reward: R,
        payoff: DesignerPayoff<R>,
        quota: R,
        kappa: R,
    ) -> Result<Self> {
        let s = Self {
            cost,
            signals,
            reward,
            payoff,
            quota,
            kappa: Some(kappa),
        };
        s.validate()?;
        Ok(s)
    }

    /// Checks all structural invariants of the scenario.
    pub fn validate(&self) -> Result<()> {
        if !(self.reward > R::zero() && self.reward.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "reward must be positive and finite, got {}",
                self.reward
            )));
        }
        if !(self.quota > R::zero() && self.quota <= R::one()) {
            return Err(Error::InvalidParameter(format!(
                "quota must lie in (0, 1], got {}",
                self.quota
            )));
        }
        match (self.kappa, self.signals.has_cheating()) {
            (Some(k), true) => {
                if !(k >= R::zero() && k <= R::one()) {
                    return Err(Error::InvalidParameter(format!(
                        "kappa must lie in [0, 1], got {k}"
                    )));
                }
            }
            (None, false) => {}
            (Some(_), false) => {
                return Err(Error::InvalidModel(
                    "kappa given but no cheat signal distribution modeled".into(),
                ))
            }
            (None, true) => {
                return Err(Error::InvalidModel(
                    "cheat signal distribution modeled but kappa missing".into(),
                ))
            }
        }
        Ok(())
    }

    pub fn has_cheating(&self) -> bool {
        self.kappa.is_some()
    }
}

/// An individual's chosen behavior.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behavior {
    NonComply,
    Comply,
    Cheat,
}

/// Equilibrium fractions choosing each behavior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorShares<R> {
    pub comply: R,
    pub noncomply: R,
    pub cheat: R,
}

/// Pairwise reward-probability differences driving the incentives.
///
/// `delta` is S_1 - S_0 in both models; the cheating model adds the two
/// pairwise differences through the cheat behavior, with
/// `delta = delta_1chi + delta_chi0` holding exactly by construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Incentives<R> {
    pub delta: R,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_1chi: Option<R>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_chi0: Option<R>,
}

/// Population-level confusion-matrix cell masses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Confusion<R> {
    pub tp: R,
    #[serde(rename = "fn")]
    pub fn_: R,
    pub fp: R,
    pub tn: R,
}

/// Everything the designer observes about a rule in equilibrium.
///
/// Serializes to a flat JSON record with keys `comply`, `noncomply`,
/// `cheat`, `s0`, `s1`, `s_chi`, `delta`, `delta_1chi`, `delta_chi0`,
/// `tp`, `fn`, `fp`, `tn`, `utility`, `quota_usage`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EquilibriumOutcome<R> {
    #[serde(flatten)]
    pub shares: BehaviorShares<R>,
    #[serde(flatten)]
    pub rewards: RewardProbabilities<R>,
    #[serde(flatten)]
    pub incentives: Incentives<R>,
    #[serde(flatten)]
    pub confusion: Confusion<R>,
    pub utility: R,
    pub quota_usage: R,
}

/// The pairwise reward-probability differences for `rule` under `scenario`.
pub fn incentives<R: Real>(rule: &Rule<R>, scenario: &ScenarioSpec<R>) -> Incentives<R> {
    incentives_from(&rule.reward_probabilities(&scenario.signals))
}

/// Incentives from precomputed reward probabilities.
pub fn incentives_from<R: Real>(rp: &RewardProbabilities<R>) -> Incentives<R> {
    match rp.s_chi {
        Some(s_chi) => {
            let d1c = rp.s1 - s_chi;
            let dc0 = s_chi - rp.s0;
            Incentives {
                // The sum form keeps delta = delta_1chi + delta_chi0 exact.
                delta: d1c + dc0,
                delta_1chi: Some(d1c),
                delta_chi0: Some(dc0),
            }
        }
        None => Incentives {
            delta: rp.s1 - rp.s0,
            delta_1chi: None,
            delta_chi0: None,
        },
    }
}

/// Cost cutoffs delimiting the best-response regions.
///
/// Costs at or below `comply_below` comply; costs above `noncomply_above`
/// do not comply; the band in between cheats. `comply_below <=
/// noncomply_above` always, so the cheat band is never negative. Cutoffs
/// are `+/-inf` in the degenerate `kappa` in {0, 1} limits, consistent
/// with direct payoff comparison (ties resolved comply > cheat >
/// noncomply).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostCutoffs<R> {
    pub comply_below: R,
    pub noncomply_above: R,
}

/// The best-response cost cutoffs for `rule` under `scenario`.
pub fn cost_cutoffs<R: Real>(rule: &Rule<R>, scenario: &ScenarioSpec<R>) -> CostCutoffs<R> {
    cost_cutoffs_from(&incentives(rule, scenario), scenario)
}

/// Best-response cost cutoffs from precomputed incentives.
pub fn cost_cutoffs_from<R: Real>(inc: &Incentives<R>, scenario: &ScenarioSpec<R>) -> CostCutoffs<R> {
    let r = scenario.reward;
    let t = r * inc.delta;
    match scenario.kappa {
        None => CostCutoffs {
            comply_below: t,
            noncomply_above: t,
        },
        Some(kappa) => {
            let d1c = inc.delta_1chi.expect("cheating incentives");
            let dc0 = inc.delta_chi0.expect("cheating incentives");
            // Comply beats cheat iff c <= r*d1c/(1-kappa); at kappa=1 the
            // cost terms cancel and the comparison is sign(d1c) alone,
            // ties going to comply.
            let u1 = if kappa < R::one() {
                r * d1c / (R::one() - kappa)
            } else if d1c >= R::zero() {
                R::infinity()
            } else {
                R::neg_infinity()
            };
            // Cheat beats noncomply iff c <= r*dc0/kappa; at kappa=0
            // cheating is free and the comparison is sign(dc0), ties
            // going to cheat.
            let u0 = if kappa > R::zero() {
                r * dc0 / kappa
            } else if dc0 >= R::zero() {
                R::infinity()
            } else {
                R::neg_infinity()
            };
            CostCutoffs {
                comply_below: t.min(u1),
                noncomply_above: t.max(u0),
            }
        }
    }
}

/// The optimal behavior for an individual with cost `cost`.
///
/// Computed by direct three-way payoff comparison (ties resolved comply >
/// cheat > noncomply), which reproduces the interval characterization
/// whenever its cutoffs are well-ordered and stays total when they are
/// not.
pub fn best_response<R: Real>(cost: R, rule: &Rule<R>, scenario: &ScenarioSpec<R>) -> Behavior {
    let rp = rule.reward_probabilities(&scenario.signals);
    let r = scenario.reward;
    let pay_comply = r * rp.s1 - cost;
    let pay_non = r * rp.s0;
    match (scenario.kappa, rp.s_chi) {
        (Some(kappa), Some(s_chi)) => {
            let pay_cheat = r * s_chi - kappa * cost;
            if pay_comply >= pay_cheat && pay_comply >= pay_non {
                Behavior::Comply
            } else if pay_cheat >= pay_non {
                Behavior::Cheat
            } else {
                Behavior::NonComply
            }
        }
        _ => {
            if pay_comply >= pay_non {
                Behavior::Comply
            } else {
                Behavior::NonComply
            }
        }
    }
}

/// Equilibrium behavior shares: F evaluated at the best-response cutoffs.
pub fn behavior_shares<R: Real>(rule: &Rule<R>, scenario: &ScenarioSpec<R>) -> BehaviorShares<R> {
    behavior_shares_from(&incentives(rule, scenario), scenario)
}

/// Behavior shares from precomputed incentives.
pub fn behavior_shares_from<R: Real>(
    inc: &Incentives<R>,
    scenario: &ScenarioSpec<R>,
) -> BehaviorShares<R> {
    let cut = cost_cutoffs_from(inc, scenario);
    let comply = scenario.cost.cdf(cut.comply_below);
    let noncomply = R::one() - scenario.cost.cdf(cut.noncomply_above);
    let cheat = (R::one() - comply - noncomply).max(R::zero());
    BehaviorShares {
        comply,
        noncomply,
        cheat,
    }
}

/// Full equilibrium evaluation of `rule` under `scenario`.
pub fn evaluate<R: Real>(rule: &Rule<R>, scenario: &ScenarioSpec<R>) -> EquilibriumOutcome<R> {
    evaluate_from_rewards(rule.reward_probabilities(&scenario.signals), scenario)
}

/// Equilibrium evaluation from precomputed reward probabilities.
///
/// This is the hot path of the binned solver, which maintains the S values
/// incrementally instead of re-integrating the rule.
pub fn evaluate_from_rewards<R: Real>(
    rewards: RewardProbabilities<R>,
    scenario: &ScenarioSpec<R>,
) -> EquilibriumOutcome<R> {
    let incentives = incentives_from(&rewards);
    let shares = behavior_shares_from(&incentives, scenario);
    let one = R::one();

    // Cheaters are scored in the (B0, B1) row alongside non-compliers.
    let s_chi = rewards.s_chi.unwrap_or(R::zero());
    let tp = shares.comply * rewards.s1;
    let fn_ = shares.comply * (one - rewards.s1);
    let fp = shares.cheat * s_chi + shares.noncomply * rewards.s0;
    let tn = shares.cheat * (one - s_chi) + shares.noncomply * (one - rewards.s0);

    let p = &scenario.payoff;
    let utility = tp * p.a1 + fn_ * p.a0 + fp * p.b0 + tn * p.b1;

    EquilibriumOutcome {
        shares,
        rewards,
        incentives,
        confusion: Confusion { tp, fn_, fp, tn },
        utility,
        quota_usage: tp + fp,
    }
}
