//! Independent verification paths: exhaustive brute force on small binned
//! problems and seeded Monte Carlo agent simulation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::binned::BinnedProblem;
use crate::equilibrium::{
    cost_cutoffs, evaluate_from_rewards, Behavior, BehaviorShares, Confusion, ScenarioSpec,
};
use crate::error::{Error, Result};
use crate::rules::{RewardProbabilities, Rule};
use crate::scalar::Real;

/// Cap on the number of grid points brute force will enumerate.
const MAX_GRID_POINTS: u128 = 400_000_000;

/// Best acceptance vector found by exhaustive grid search.
#[derive(Clone, Debug, Serialize)]
pub struct BruteForceResult<R> {
    pub probs: Vec<R>,
    pub utility: R,
}

/// Exhaustively searches `[0, 1]^n` at step `resolution`, filtered by the
/// quota, and returns the argmax. Ties go to the lexicographically
/// smallest vector (all-zeros first), matching the solver's tie-break.
pub fn brute_force_binned<R: Real>(
    problem: &BinnedProblem<R>,
    q: R,
    resolution: f64,
) -> Result<BruteForceResult<R>> {
    let n = problem.n_bins();
    if n > 6 {
        return Err(Error::SizeLimit(format!(
            "brute force is limited to 6 bins, got {n}"
        )));
    }
    if resolution < 0.01 {
        return Err(Error::InvalidParameter(format!(
            "brute-force resolution must be at least 0.01, got {resolution}"
        )));
    }
    let steps = (1.0 / resolution).round() as usize;
    let levels: Vec<R> = (0..=steps)
        .map(|k| {
            if k == steps {
                R::one()
            } else {
                R::of(k as f64 * resolution)
            }
        })
        .collect();
    let total = (levels.len() as u128).pow(n as u32);
    if total > MAX_GRID_POINTS {
        return Err(Error::SizeLimit(format!(
            "{total} grid points exceed the brute-force cap"
        )));
    }

    let slack = R::of(1e-9);
    // Parallelize over the first bin's level; enumerate the rest with an
    // odometer, maintaining the S partial sums incrementally.
    let best = levels
        .par_iter()
        .enumerate()
        .map(|(first, _)| {
            let mut assignment = vec![0usize; n];
            assignment[0] = first;
            let mut local: Option<(Vec<usize>, R)> = None;
            loop {
                let probs: Vec<R> = assignment.iter().map(|&k| levels[k]).collect();
                let rewards = rewards_of(problem, &probs);
                let out = evaluate_from_rewards(rewards, &problem.scenario);
                if out.quota_usage <= q + slack
                    && local.as_ref().map_or(true, |(_, u)| out.utility > *u)
                {
                    local = Some((assignment.clone(), out.utility));
                }
                // Advance the odometer over bins 1..n.
                let mut pos = n - 1;
                loop {
                    if pos == 0 {
                        return local;
                    }
                    assignment[pos] += 1;
                    if assignment[pos] < levels.len() {
                        break;
                    }
                    assignment[pos] = 0;
                    pos -= 1;
                }
            }
        })
        .reduce(
            || None,
            |a, b| match (a, b) {
                (None, x) | (x, None) => x,
                (Some(x), Some(y)) => {
                    // Strictly-better wins; ties go to the smaller vector.
                    if y.1 > x.1 || (y.1 == x.1 && y.0 < x.0) {
                        Some(y)
                    } else {
                        Some(x)
                    }
                }
            },
        );

    let (assignment, utility) = match best {
        Some(found) => found,
        None => return Err(Error::Infeasible),
    };

    // Local coordinate refinement around the grid argmax: the coarse grid
    // cannot represent an optimum pinned to the quota boundary between two
    // levels, so sweep each coordinate over its +/- one-step neighbourhood
    // on a much finer grid until no coordinate improves.
    let mut probs: Vec<R> = assignment.iter().map(|&k| levels[k]).collect();
    let mut utility = utility;
    let step = R::of(resolution);
    for _ in 0..8 {
        let mut improved = false;
        for m in 0..n {
            let center = probs[m];
            let lo = (center - step).max(R::zero());
            let hi = (center + step).min(R::one());
            let mut candidate = probs.clone();
            for k in 0..=200 {
                let theta = lo + (hi - lo) * R::of(k as f64 / 200.0);
                candidate[m] = theta;
                let out = evaluate_from_rewards(rewards_of(problem, &candidate), &problem.scenario);
                if out.quota_usage <= q + slack && out.utility > utility {
                    probs[m] = theta;
                    utility = out.utility;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }

    Ok(BruteForceResult { probs, utility })
}

fn rewards_of<R: Real>(problem: &BinnedProblem<R>, probs: &[R]) -> RewardProbabilities<R> {
    let dot = |gamma: &[R]| gamma.iter().zip(probs).map(|(&g, &p)| g * p).sum::<R>();
    RewardProbabilities {
        s0: dot(&problem.masses.gamma0),
        s1: dot(&problem.masses.gamma1),
        s_chi: problem.masses.gamma_chi.as_deref().map(dot),
    }
}

/// Empirical equilibrium quantities from an agent-level simulation.
#[derive(Clone, Debug, Serialize)]
pub struct SimulationReport<R> {
    pub n_agents: usize,
    pub seed: u64,
    pub empirical_shares: BehaviorShares<R>,
    pub empirical_confusion: Confusion<R>,
    /// Binomial standard errors `sqrt(p(1-p)/n)` per confusion cell.
    pub standard_errors: Confusion<R>,
}

#[derive(Clone, Copy, Default)]
struct Tally {
    comply: u64,
    cheat: u64,
    noncomply: u64,
    tp: u64,
    fn_: u64,
    fp: u64,
    tn: u64,
}

impl Tally {
    fn merge(self, other: Self) -> Self {
        Tally {
            comply: self.comply + other.comply,
            cheat: self.cheat + other.cheat,
            noncomply: self.noncomply + other.noncomply,
            tp: self.tp + other.tp,
            fn_: self.fn_ + other.fn_,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
        }
    }
}

/// Simulates `n_agents` individuals living through the model timing: draw
/// a cost, best-respond to the rule, emit a signal, get classified.
///
/// Each agent uses its own deterministic RNG substream, so the result is
/// identical for a given seed regardless of thread scheduling.
pub fn simulate<R: Real>(
    rule: &Rule<R>,
    scenario: &ScenarioSpec<R>,
    n_agents: usize,
    seed: u64,
) -> Result<SimulationReport<R>> {
    if n_agents == 0 {
        return Err(Error::InvalidParameter(
            "simulation needs at least one agent".into(),
        ));
    }
    scenario.validate()?;
    let cutoffs = cost_cutoffs(rule, scenario);

    let tally = (0..n_agents)
        .into_par_iter()
        .fold(Tally::default, |mut acc, agent| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(agent as u64);
            let cost = scenario.cost.sample_with(&mut rng);
            // Region classification mirrors best_response's tie-break
            // (comply > cheat > noncomply).
            let behavior = if cost <= cutoffs.comply_below {
                Behavior::Comply
            } else if cost <= cutoffs.noncomply_above && scenario.has_cheating() {
                Behavior::Cheat
            } else {
                Behavior::NonComply
            };
            let signal_dist = match behavior {
                Behavior::Comply => &scenario.signals.g1,
                Behavior::Cheat => scenario.signals.g_chi.as_ref().expect("cheating modeled"),
                Behavior::NonComply => &scenario.signals.g0,
            };
            let s = signal_dist.sample_with(&mut rng);
            let p = rule.accept_prob(s);
            let accepted = if p <= R::zero() {
                false
            } else if p >= R::one() {
                true
            } else {
                R::of(rng.gen::<f64>()) < p
            };
            match behavior {
                Behavior::Comply => {
                    acc.comply += 1;
                    if accepted {
                        acc.tp += 1;
                    } else {
                        acc.fn_ += 1;
                    }
                }
                Behavior::Cheat => {
                    acc.cheat += 1;
                    if accepted {
                        acc.fp += 1;
                    } else {
                        acc.tn += 1;
                    }
                }
                Behavior::NonComply => {
                    acc.noncomply += 1;
                    if accepted {
                        acc.fp += 1;
                    } else {
                        acc.tn += 1;
                    }
                }
            }
            acc
        })
        .reduce(Tally::default, Tally::merge);

    let n = R::of(n_agents as f64);
    let frac = |k: u64| R::of(k as f64) / n;
    let se = |k: u64| {
        let p = frac(k);
        (p * (R::one() - p) / n).sqrt()
    };
    Ok(SimulationReport {
        n_agents,
        seed,
        empirical_shares: BehaviorShares {
            comply: frac(tally.comply),
            noncomply: frac(tally.noncomply),
            cheat: frac(tally.cheat),
        },
        empirical_confusion: Confusion {
            tp: frac(tally.tp),
            fn_: frac(tally.fn_),
            fp: frac(tally.fp),
            tn: frac(tally.tn),
        },
        standard_errors: Confusion {
            tp: se(tally.tp),
            fn_: se(tally.fn_),
            fp: se(tally.fp),
            tn: se(tally.tn),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binned::{build_bins, solve_binned};
    use crate::equilibrium::evaluate;
    use crate::scenarios::{example_1, example_2, example_3};

    #[test]
    fn brute_force_one_bin_is_bang_bang() {
        // With a single bin every S_beta equals the bin probability, so
        // incentives vanish and the objective is linear: the optimum sits
        // at an endpoint.
        let sc = example_1();
        let problem = crate::binned::BinnedProblem {
            edges: vec![],
            masses: crate::binned::BinMasses {
                gamma0: vec![1.0],
                gamma1: vec![1.0],
                gamma_chi: None,
            },
            h: vec![0.0],
            scenario: sc,
        };
        let res = brute_force_binned(&problem, 1.0, 0.02).unwrap();
        assert_eq!(res.probs.len(), 1);
        assert!(res.probs[0] == 0.0 || res.probs[0] == 1.0);
    }

    #[test]
    fn brute_force_agrees_with_solver_on_example1() {
        let sc = example_1();
        let problem = build_bins(&sc, (-1.5, 1.5), 1).unwrap();
        let sol = solve_binned(&problem, 1.0).unwrap();
        let coarse = brute_force_binned(&problem, 1.0, 0.02).unwrap();
        let fine = brute_force_binned(&problem, 1.0, 0.01).unwrap();
        assert!((sol.utility - coarse.utility).abs() < 1e-3);
        // Self-consistency between resolutions.
        assert!(fine.utility >= coarse.utility - 1e-12);
        assert!((fine.utility - coarse.utility).abs() < 1e-3);
    }

    #[test]
    fn brute_force_tiny_quota_rejects_everything() {
        let sc = example_1();
        let problem = build_bins(&sc, (-1.0, 1.0), 2).unwrap();
        let res = brute_force_binned(&problem, 1e-6, 0.02).unwrap();
        assert!(res.probs.iter().all(|&p| p == 0.0), "{:?}", res.probs);
    }

    #[test]
    fn brute_force_size_limits() {
        let sc = example_1();
        let problem = build_bins(&sc, (-1.0, 1.0), 1).unwrap();
        assert!(matches!(
            brute_force_binned(&problem, 1.0, 0.005),
            Err(Error::InvalidParameter(_))
        ));
        let big = build_bins(&sc, (-1.0, 1.0), 6).unwrap();
        assert!(matches!(
            brute_force_binned(&big, 1.0, 0.02),
            Err(Error::SizeLimit(_))
        ));
        // 101^6 points exceeds the cap even though n = 6 is allowed.
        let six = build_bins(&sc, (-1.0, 1.0), 4).unwrap();
        assert!(matches!(
            brute_force_binned(&six, 1.0, 0.01),
            Err(Error::SizeLimit(_))
        ));
    }

    #[test]
    fn simulation_is_reproducible() {
        let sc = example_2();
        let rule = Rule::positive_threshold(1.11);
        let a = simulate(&rule, &sc, 10_000, 42).unwrap();
        let b = simulate(&rule, &sc, 10_000, 42).unwrap();
        assert_eq!(a.empirical_confusion.tp, b.empirical_confusion.tp);
        assert_eq!(a.empirical_shares.cheat, b.empirical_shares.cheat);
        let c = simulate(&rule, &sc, 10_000, 43).unwrap();
        assert_ne!(a.empirical_confusion.tp, c.empirical_confusion.tp);
    }

    #[test]
    fn simulation_matches_analytic_cells() {
        let cases: Vec<(ScenarioSpec<f64>, Rule<f64>)> = vec![
            (example_1(), Rule::negative_threshold(-1.55)),
            (example_2(), Rule::positive_threshold(1.11)),
            (example_3(), Rule::inner_two_cut(0.85, 1.08).unwrap()),
        ];
        for (sc, rule) in cases {
            let n = 400_000;
            let rep = simulate(&rule, &sc, n, 7).unwrap();
            let out = evaluate(&rule, &sc);
            let checks = [
                (rep.empirical_confusion.tp, out.confusion.tp, rep.standard_errors.tp),
                (rep.empirical_confusion.fn_, out.confusion.fn_, rep.standard_errors.fn_),
                (rep.empirical_confusion.fp, out.confusion.fp, rep.standard_errors.fp),
                (rep.empirical_confusion.tn, out.confusion.tn, rep.standard_errors.tn),
            ];
            for (emp, analytic, se) in checks {
                let bound = 3.0 * se.max(1.0 / n as f64);
                assert!(
                    (emp - analytic).abs() <= bound,
                    "cell off: empirical {emp}, analytic {analytic}, 3se {bound}"
                );
            }
            let shares_total = rep.empirical_shares.comply
                + rep.empirical_shares.cheat
                + rep.empirical_shares.noncomply;
            assert!((shares_total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn accept_everything_yields_sincere_compliance() {
        let sc = example_1();
        let rule = Rule::binned(vec![0.0], vec![1.0, 1.0]).unwrap();
        let n = 200_000;
        let rep = simulate(&rule, &sc, n, 11).unwrap();
        let sincere = sc.cost.cdf(0.0);
        let accepted_compliers = rep.empirical_confusion.tp + rep.empirical_confusion.fn_;
        let se = (sincere * (1.0 - sincere) / n as f64).sqrt();
        assert!((accepted_compliers - sincere).abs() < 3.0 * se);
    }

    #[test]
    fn interior_probabilities_randomize() {
        let sc = example_1();
        let rule = Rule::binned(vec![0.0], vec![0.5, 0.5]).unwrap();
        let rep = simulate(&rule, &sc, 100_000, 3).unwrap();
        let accepted = rep.empirical_confusion.tp + rep.empirical_confusion.fp;
        assert!((accepted - 0.5).abs() < 0.01, "accept rate {accepted}");
    }
}
