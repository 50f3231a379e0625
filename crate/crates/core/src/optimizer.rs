//! Quota-constrained search over the structured rule families.
//!
//! The continuum optimum is known to lie in the threshold families
//! (baseline model) or the threshold-plus-two-cut families (cheating
//! model), so optimization reduces to low-dimensional parameter search:
//! multistart coarse grids followed by local bracket refinement, with the
//! quota handled by feasible-region restriction and an explicit boundary
//! candidate found by bisection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{evaluate, EquilibriumOutcome, ScenarioSpec};
use crate::error::{Error, Result};
use crate::rules::Rule;
use crate::scalar::{linspace, Real};

/// Slack added to the quota when testing feasibility of a candidate.
const QUOTA_SLACK: f64 = 1e-9;

/// The four structured rule families the theorems certify.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleFamily {
    PositiveThreshold,
    NegativeThreshold,
    InnerTwoCut,
    OuterTwoCut,
}

impl RuleFamily {
    pub fn is_threshold(self) -> bool {
        matches!(self, Self::PositiveThreshold | Self::NegativeThreshold)
    }
}

/// Search hyperparameters for the grid-plus-refinement optimizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig<R> {
    /// Lower search bound in signal units.
    pub grid_lo: R,
    /// Upper search bound in signal units.
    pub grid_hi: R,
    /// Points in the 1D coarse grid (2D grids use about a tenth per axis).
    pub coarse_points: usize,
    /// Local refinement passes around the incumbent.
    pub refine_iters: usize,
    /// Window shrink factor per refinement pass, in (0, 1).
    pub refine_shrink: R,
    /// Stop refining when the window is below this parameter tolerance.
    pub tol_param: R,
    /// Family ties within this objective tolerance go to the simpler family.
    pub tol_value: R,
}

impl<R: Real> SearchConfig<R> {
    /// Defaults with explicit bounds.
    pub fn with_bounds(grid_lo: R, grid_hi: R) -> Result<Self> {
        let c = Self {
            grid_lo,
            grid_hi,
            coarse_points: 2001,
            refine_iters: 40,
            refine_shrink: R::of(0.5),
            tol_param: R::of(1e-9),
            tol_value: R::of(1e-9),
        };
        c.validate()?;
        Ok(c)
    }

    /// Defaults with bounds covering every signal distribution's
    /// mean +/- 8 sd; acceptance probabilities are saturated outside.
    pub fn for_scenario(scenario: &ScenarioSpec<R>) -> Self {
        let (lo, hi) = scenario.signals.support_hint(R::of(8.0));
        Self::with_bounds(lo, hi).expect("support hint yields valid bounds")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.grid_lo < self.grid_hi) {
            return Err(Error::InvalidParameter(format!(
                "search bounds must satisfy grid_lo < grid_hi, got ({}, {})",
                self.grid_lo, self.grid_hi
            )));
        }
        if self.coarse_points < 3 {
            return Err(Error::InvalidParameter(
                "coarse_points must be at least 3".into(),
            ));
        }
        if !(self.refine_shrink > R::zero() && self.refine_shrink < R::one()) {
            return Err(Error::InvalidParameter(
                "refine_shrink must lie in (0, 1)".into(),
            ));
        }
        if !(self.tol_param > R::zero() && self.tol_value > R::zero()) {
            return Err(Error::InvalidParameter(
                "tolerances must be positive".into(),
            ));
        }
        Ok(())
    }

    fn points_per_axis_2d(&self) -> usize {
        (self.coarse_points / 10 + 1).max(41)
    }
}

/// Best rule found within a single family.
#[derive(Clone, Debug, Serialize)]
pub struct FamilyBest<R> {
    pub family: RuleFamily,
    pub rule: Rule<R>,
    pub outcome: EquilibriumOutcome<R>,
}

/// Result of a family search: overall best plus the per-family bests.
#[derive(Clone, Debug, Serialize)]
pub struct OptimizationResult<R> {
    pub best_rule: Rule<R>,
    pub outcome: EquilibriumOutcome<R>,
    pub family_comparison: Vec<FamilyBest<R>>,
    /// True when the returned best satisfies the quota.
    pub feasible: bool,
}

/// Feasible-region description for one family's quota projection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "region", rename_all = "snake_case")]
pub enum FeasibleRegion<R> {
    /// The whole searched parameter range satisfies the quota.
    All,
    /// Feasible iff `tau >= boundary` (positive thresholds).
    TauAtLeast { boundary: R },
    /// Feasible iff `tau <= boundary` (negative thresholds).
    TauAtMost { boundary: R },
}

fn is_feasible<R: Real>(out: &EquilibriumOutcome<R>, q: R) -> bool {
    out.quota_usage <= q + R::of(QUOTA_SLACK)
}

fn threshold_rule<R: Real>(family: RuleFamily, tau: R) -> Rule<R> {
    match family {
        RuleFamily::PositiveThreshold => Rule::positive_threshold(tau),
        RuleFamily::NegativeThreshold => Rule::negative_threshold(tau),
        _ => unreachable!("threshold_rule called with a two-cut family"),
    }
}

fn two_cut_rule<R: Real>(family: RuleFamily, lo: R, hi: R) -> Result<Rule<R>> {
    match family {
        RuleFamily::InnerTwoCut => Rule::inner_two_cut(lo, hi),
        RuleFamily::OuterTwoCut => Rule::outer_two_cut(lo, hi),
        _ => unreachable!("two_cut_rule called with a threshold family"),
    }
}

/// Boundary of the quota-feasible parameter region for a threshold family,
/// found by bisection on the (monotone) quota usage.
pub fn quota_project<R: Real>(
    scenario: &ScenarioSpec<R>,
    family: RuleFamily,
    q: R,
) -> Result<FeasibleRegion<R>> {
    if !(q > R::zero() && q <= R::one()) {
        return Err(Error::InvalidParameter(format!(
            "quota must lie in (0, 1], got {q}"
        )));
    }
    if !family.is_threshold() {
        return Err(Error::UnsupportedFamily(
            "quota projection is defined for threshold families; two-cut \
             feasibility is handled by grid restriction"
                .into(),
        ));
    }
    let config = SearchConfig::for_scenario(scenario);
    let usage = |tau: R| evaluate(&threshold_rule(family, tau), scenario).quota_usage;
    // Usage decreases in tau for positive thresholds and increases for
    // negative ones; orient the bracket so `a` is the saturated side.
    let (mut a, mut b) = match family {
        RuleFamily::PositiveThreshold => (config.grid_lo, config.grid_hi),
        _ => (config.grid_hi, config.grid_lo),
    };
    if usage(a) <= q {
        return Ok(FeasibleRegion::All);
    }
    // usage(a) > q >= 0 ~ usage(b): a crossing lies between.
    let mut converged = false;
    for _ in 0..200 {
        let m = (a + b) / R::of(2.0);
        if usage(m) > q {
            a = m;
        } else {
            b = m;
        }
        if (a - b).abs() <= R::of(1e-13) * (R::one() + a.abs() + b.abs()) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NumericalFailure(200));
    }
    // `b` is on the feasible side of the crossing.
    Ok(match family {
        RuleFamily::PositiveThreshold => FeasibleRegion::TauAtLeast { boundary: b },
        _ => FeasibleRegion::TauAtMost { boundary: b },
    })
}

/// Best feasible rule in one threshold family, or None when nothing
/// feasible was found.
fn search_threshold_family<R: Real>(
    scenario: &ScenarioSpec<R>,
    config: &SearchConfig<R>,
    family: RuleFamily,
) -> Option<FamilyBest<R>> {
    let q = scenario.quota;
    let eval_feasible = |tau: R| {
        let rule = threshold_rule(family, tau);
        let out = evaluate(&rule, scenario);
        is_feasible(&out, q).then_some((tau, out))
    };

    let grid = linspace(config.grid_lo, config.grid_hi, config.coarse_points);
    let mut candidates: Vec<(R, EquilibriumOutcome<R>)> = grid
        .par_iter()
        .filter_map(|&tau| eval_feasible(tau))
        .collect();
    // The constrained optimum may sit exactly on the quota boundary
    // between grid points; add it as an explicit candidate.
    if let Ok(FeasibleRegion::TauAtLeast { boundary } | FeasibleRegion::TauAtMost { boundary }) =
        quota_project(scenario, family, q)
    {
        candidates.extend(eval_feasible(boundary));
    }

    let better = |x: &(R, EquilibriumOutcome<R>), y: &(R, EquilibriumOutcome<R>)| {
        x.1.utility > y.1.utility
    };
    // Refine around the best few coarse candidates; the objective can be
    // multimodal through the prevalence feedback.
    let mut seeds = candidates;
    seeds.sort_by(|x, y| y.1.utility.partial_cmp(&x.1.utility).expect("finite utility"));
    seeds.truncate(5);
    let step = (config.grid_hi - config.grid_lo) / R::of((config.coarse_points - 1) as f64);

    let mut best: Option<(R, EquilibriumOutcome<R>)> = None;
    for (seed_tau, seed_out) in seeds {
        let mut local = (seed_tau, seed_out);
        let mut w = step;
        for _ in 0..config.refine_iters {
            if w < config.tol_param {
                break;
            }
            let lo = (local.0 - w).max(config.grid_lo);
            let hi = (local.0 + w).min(config.grid_hi);
            for tau in linspace(lo, hi, 33) {
                if let Some(c) = eval_feasible(tau) {
                    if better(&c, &local) {
                        local = c;
                    }
                }
            }
            w = w * config.refine_shrink;
        }
        if best.as_ref().is_none_or(|b| better(&local, b)) {
            best = Some(local);
        }
    }

    best.map(|(tau, outcome)| FamilyBest {
        family,
        rule: threshold_rule(family, tau),
        outcome,
    })
}

/// Best feasible rule in one two-cut family via 2D grid + refinement.
fn search_two_cut_family<R: Real>(
    scenario: &ScenarioSpec<R>,
    config: &SearchConfig<R>,
    family: RuleFamily,
) -> Option<FamilyBest<R>> {
    let q = scenario.quota;
    let eval_feasible = |lo: R, hi: R| {
        if !(lo < hi) {
            return None;
        }
        let rule = two_cut_rule(family, lo, hi).ok()?;
        let out = evaluate(&rule, scenario);
        is_feasible(&out, q).then_some(((lo, hi), out))
    };

    let n = config.points_per_axis_2d();
    let axis = linspace(config.grid_lo, config.grid_hi, n);
    let mut seeds: Vec<((R, R), EquilibriumOutcome<R>)> = axis
        .par_iter()
        .flat_map_iter(|&lo| axis.iter().filter_map(move |&hi| eval_feasible(lo, hi)))
        .collect();
    seeds.sort_by(|x, y| y.1.utility.partial_cmp(&x.1.utility).expect("finite utility"));
    seeds.truncate(5);

    let step = (config.grid_hi - config.grid_lo) / R::of((n - 1) as f64);
    let mut best: Option<((R, R), EquilibriumOutcome<R>)> = None;
    for seed in seeds {
        let mut local = seed;
        let mut w = step;
        for _ in 0..config.refine_iters {
            if w < config.tol_param {
                break;
            }
            let (clo, chi) = local.0;
            let los = linspace((clo - w).max(config.grid_lo), clo + w, 13);
            let his = linspace(chi - w, (chi + w).min(config.grid_hi), 13);
            for &lo in &los {
                for &hi in &his {
                    if let Some(c) = eval_feasible(lo, hi) {
                        if c.1.utility > local.1.utility {
                            local = c;
                        }
                    }
                }
            }
            w = w * config.refine_shrink;
        }
        if best
            .as_ref()
            .is_none_or(|b| local.1.utility > b.1.utility)
        {
            best = Some(local);
        }
    }

    best.map(|((lo, hi), outcome)| FamilyBest {
        family,
        rule: two_cut_rule(family, lo, hi).expect("refined cuts stay ordered"),
        outcome,
    })
}

fn assemble<R: Real>(mut comparison: Vec<FamilyBest<R>>, tol_value: R) -> Result<OptimizationResult<R>> {
    comparison.sort_by(|x, y| {
        y.outcome
            .utility
            .partial_cmp(&x.outcome.utility)
            .expect("finite utility")
    });
    if comparison.is_empty() {
        return Err(Error::Infeasible);
    }
    // Within tol_value of the top, prefer the simpler (threshold) family.
    let top = comparison[0].outcome.utility;
    let best = comparison
        .iter()
        .filter(|f| f.outcome.utility >= top - tol_value)
        .max_by_key(|f| f.family.is_threshold())
        .expect("nonempty");
    Ok(OptimizationResult {
        best_rule: best.rule.clone(),
        outcome: best.outcome,
        feasible: true,
        family_comparison: comparison,
    })
}

/// Optimal rule over the two threshold families.
pub fn optimize_threshold<R: Real>(
    scenario: &ScenarioSpec<R>,
    config: &SearchConfig<R>,
) -> Result<OptimizationResult<R>> {
    scenario.validate()?;
    config.validate()?;
    let comparison: Vec<FamilyBest<R>> =
        [RuleFamily::PositiveThreshold, RuleFamily::NegativeThreshold]
            .into_iter()
            .filter_map(|fam| search_threshold_family(scenario, config, fam))
            .collect();
    assemble(comparison, config.tol_value)
}

/// Optimal rule over thresholds and two-cut families (cheating model with
/// exponential-family signals).
pub fn optimize_two_cut<R: Real>(
    scenario: &ScenarioSpec<R>,
    config: &SearchConfig<R>,
) -> Result<OptimizationResult<R>> {
    scenario.validate()?;
    config.validate()?;
    if !scenario.has_cheating() {
        return Err(Error::InvalidModel(
            "two-cut optimization applies to the cheating model".into(),
        ));
    }
    // Two-cut optimality is certified for exponential-family signal
    // ratios; reject models outside that class.
    scenario.signals.exp_family_ratios()?;

    let mut comparison: Vec<FamilyBest<R>> =
        [RuleFamily::PositiveThreshold, RuleFamily::NegativeThreshold]
            .into_iter()
            .filter_map(|fam| search_threshold_family(scenario, config, fam))
            .collect();
    comparison.extend(
        [RuleFamily::InnerTwoCut, RuleFamily::OuterTwoCut]
            .into_iter()
            .filter_map(|fam| search_two_cut_family(scenario, config, fam)),
    );
    assemble(comparison, config.tol_value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::{objective_preset, ObjectivePreset};
    use crate::scenarios::{example_1, example_2, example_3};

    fn tau_of(rule: &Rule<f64>) -> f64 {
        match rule {
            Rule::PositiveThreshold { tau } | Rule::NegativeThreshold { tau } => *tau,
            other => panic!("expected threshold rule, got {other:?}"),
        }
    }

    #[test]
    fn example1_threshold_optimum() {
        let sc = example_1();
        let config = SearchConfig::for_scenario(&sc);
        let res = optimize_threshold(&sc, &config).unwrap();
        assert!(matches!(res.best_rule, Rule::NegativeThreshold { .. }));
        assert!((tau_of(&res.best_rule) - (-1.55)).abs() < 0.05);
        assert!((res.outcome.utility - 0.8697).abs() < 5e-3);
        assert!((res.outcome.shares.comply - 0.0747).abs() < 5e-3);

        let pos = res
            .family_comparison
            .iter()
            .find(|f| f.family == RuleFamily::PositiveThreshold)
            .unwrap();
        assert!((tau_of(&pos.rule) - (-0.26)).abs() < 0.05);
        assert!((pos.outcome.utility - 0.852).abs() < 5e-3);
        assert!((pos.outcome.shares.comply - 0.911).abs() < 5e-3);
        assert!(res.outcome.utility > pos.outcome.utility);
    }

    #[test]
    fn compliance_objective_prefers_positive_threshold() {
        let mut sc = example_1();
        sc.payoff = objective_preset(ObjectivePreset::Compliance).unwrap();
        let config = SearchConfig::for_scenario(&sc);
        let res = optimize_threshold(&sc, &config).unwrap();
        assert!(matches!(res.best_rule, Rule::PositiveThreshold { .. }));
        // Utility under the compliance preset is the comply share, which
        // must beat sincere compliance F(0).
        let sincere = sc.cost.cdf(0.0);
        assert!(res.outcome.shares.comply >= sincere);
    }

    #[test]
    fn example2_two_cut_optimum() {
        let sc = example_2();
        let config = SearchConfig::for_scenario(&sc);
        let res = optimize_two_cut(&sc, &config).unwrap();
        let best_threshold = res
            .family_comparison
            .iter()
            .filter(|f| f.family.is_threshold())
            .map(|f| f.outcome.utility)
            .fold(f64::NEG_INFINITY, f64::max);
        let pos = res
            .family_comparison
            .iter()
            .find(|f| f.family == RuleFamily::PositiveThreshold)
            .unwrap();
        assert!((tau_of(&pos.rule) - 1.11).abs() < 0.05);
        assert!((pos.outcome.utility - 0.617).abs() < 5e-3);
        assert!((pos.outcome.shares.comply - 0.645).abs() < 5e-3);
        assert!((pos.outcome.shares.cheat - 0.355).abs() < 5e-3);

        assert!(matches!(res.best_rule, Rule::OuterTwoCut { .. }));
        assert!(res.outcome.utility > best_threshold);
        assert!(res.outcome.utility >= 0.6213 - 1e-3);
    }

    #[test]
    fn example3_two_cut_optimum() {
        let sc = example_3();
        let config = SearchConfig::for_scenario(&sc);
        let res = optimize_two_cut(&sc, &config).unwrap();
        let neg = res
            .family_comparison
            .iter()
            .find(|f| f.family == RuleFamily::NegativeThreshold)
            .unwrap();
        assert!((tau_of(&neg.rule) - (-1.5)).abs() < 0.05);
        assert!((neg.outcome.utility - 0.8747).abs() < 5e-3);

        assert!(matches!(res.best_rule, Rule::InnerTwoCut { .. }));
        assert!(res.outcome.utility > neg.outcome.utility);
        assert!(res.outcome.utility >= 0.8809 - 1e-3);
    }

    #[test]
    fn quota_projection_boundary() {
        let sc = example_1();
        assert_eq!(
            quota_project(&sc, RuleFamily::PositiveThreshold, 1.0).unwrap(),
            FeasibleRegion::All
        );
        let q = 0.5;
        let region = quota_project(&sc, RuleFamily::PositiveThreshold, q).unwrap();
        let FeasibleRegion::TauAtLeast { boundary } = region else {
            panic!("expected a boundary, got {region:?}");
        };
        let usage = evaluate(&Rule::positive_threshold(boundary), &sc).quota_usage;
        assert!((usage - q).abs() < 1e-6, "usage at boundary {usage}");
        assert!(quota_project(&sc, RuleFamily::InnerTwoCut, q).is_err());
    }

    #[test]
    fn quota_constrained_optimum_is_feasible() {
        for q in [0.05, 0.3, 0.7] {
            let mut sc = example_1();
            sc.quota = q;
            let config = SearchConfig::for_scenario(&sc);
            let res = optimize_threshold(&sc, &config).unwrap();
            assert!(res.feasible);
            assert!(res.outcome.quota_usage <= q + 1e-9);

            let mut sc2 = example_2();
            sc2.quota = q;
            let res2 = optimize_two_cut(&sc2, &SearchConfig::for_scenario(&sc2)).unwrap();
            assert!(res2.outcome.quota_usage <= q + 1e-9);
        }
    }

    #[test]
    fn tight_quota_reduces_utility_monotonically() {
        let mut utilities = Vec::new();
        for q in [0.1, 0.3, 0.6, 1.0] {
            let mut sc = example_1();
            sc.quota = q;
            let res = optimize_threshold(&sc, &SearchConfig::for_scenario(&sc)).unwrap();
            utilities.push(res.outcome.utility);
        }
        for w in utilities.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "utility fell as quota loosened: {utilities:?}");
        }
    }

    #[test]
    fn two_cut_requires_cheating_model() {
        let sc = example_1();
        let config = SearchConfig::for_scenario(&sc);
        assert!(matches!(
            optimize_two_cut(&sc, &config),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn degenerate_inner_cut_approaches_reject_everything() {
        let sc = example_2();
        let reject = evaluate(&Rule::binned(vec![0.0], vec![0.0, 0.0]).unwrap(), &sc);
        let narrow = evaluate(&Rule::inner_two_cut(1.0, 1.0 + 1e-9).unwrap(), &sc);
        assert!((narrow.utility - reject.utility).abs() < 1e-6);
    }

    #[test]
    fn config_validation() {
        assert!(SearchConfig::with_bounds(1.0, -1.0).is_err());
        let mut c = SearchConfig::with_bounds(-1.0, 1.0).unwrap();
        c.coarse_points = 2;
        assert!(c.validate().is_err());
        let mut c = SearchConfig::with_bounds(-1.0, 1.0).unwrap();
        c.refine_shrink = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn refinement_is_internally_consistent() {
        // Halving tol_param must not change the optimum beyond tol_value.
        let sc = example_1();
        let mut c1 = SearchConfig::for_scenario(&sc);
        c1.tol_param = 1e-6;
        c1.tol_value = 1e-6;
        let mut c2 = c1;
        c2.tol_param = 5e-7;
        let u1 = optimize_threshold(&sc, &c1).unwrap().outcome.utility;
        let u2 = optimize_threshold(&sc, &c2).unwrap().outcome.utility;
        assert!((u1 - u2).abs() < 1e-6);
    }
}
