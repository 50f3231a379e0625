//! Bundled worked-example scenarios, shared by the test suite and the
//! CLI's reproduction command.

use crate::dist::{Distribution, SignalModel};
use crate::equilibrium::{objective_preset, ObjectivePreset, ScenarioSpec};

fn g(mean: f64, sd: f64) -> Distribution<f64> {
    Distribution::gaussian(mean, sd).unwrap()
}

/// Baseline worked example: cost N(0.5, 0.5), signals N(0,1)/N(1,1), r=4,
/// accuracy objective, slack quota.
pub fn example_1() -> ScenarioSpec<f64> {
    ScenarioSpec::baseline(
        g(0.5, 0.5),
        SignalModel::baseline(g(0.0, 1.0), g(1.0, 1.0)),
        4.0,
        objective_preset(ObjectivePreset::Accuracy).unwrap(),
        1.0,
    )
    .unwrap()
}

/// Cheating worked example with a high-compliance population: cost
/// N(0, 1), signal means (0, 1.75, 2) with unit sd, r=3, kappa=0.4.
pub fn example_2() -> ScenarioSpec<f64> {
    ScenarioSpec::with_cheating(
        g(0.0, 1.0),
        SignalModel::with_cheating(g(0.0, 1.0), g(1.75, 1.0), g(2.0, 1.0)),
        3.0,
        objective_preset(ObjectivePreset::Accuracy).unwrap(),
        1.0,
        0.4,
    )
    .unwrap()
}

/// Cheating worked example with a low-compliance population: cost
/// N(0.5, 0.5), signal means (0, 1.5, 2) with unit sd, r=4, kappa=0.6.
pub fn example_3() -> ScenarioSpec<f64> {
    ScenarioSpec::with_cheating(
        g(0.5, 0.5),
        SignalModel::with_cheating(g(0.0, 1.0), g(1.5, 1.0), g(2.0, 1.0)),
        4.0,
        objective_preset(ObjectivePreset::Accuracy).unwrap(),
        1.0,
        0.6,
    )
    .unwrap()
}
