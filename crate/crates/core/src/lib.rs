//! Equilibrium-optimal binary classification for strategic populations.
//!
//! A designer commits to a classification rule; every individual then picks
//! the behavior (comply, cheat where available, or not comply) that maximizes
//! their own expected payoff given the rule. This crate computes the induced
//! equilibrium (behavior shares, confusion matrix, designer utility), searches
//! the structured rule families that are optimal in this setting (positive and
//! negative thresholds, inner and outer two-cut rules), and cross-checks the
//! structure on discretized versions of the problem via the KKT switching
//! function.
//!
//! Module map:
//! - [`dist`]: cost and behavior-conditional signal distributions
//! - [`rules`]: rule families and reward probabilities
//! - [`equilibrium`]: best responses, behavior shares, designer utility
//! - [`optimizer`]: quota-constrained search over rule families
//! - [`binned`]: discretized solver plus structure certificates
//! - [`oracle`]: brute-force and Monte Carlo verification paths
//!
//! All core math is generic over the scalar type via [`scalar::Real`]
//! (`f32` or `f64`); the `*64` aliases below fix `f64`.

pub mod binned;
pub mod dist;
pub mod equilibrium;
pub mod error;
pub mod optimizer;
pub mod oracle;
pub mod quad;
pub mod rules;
pub mod scalar;
pub mod scenarios;
pub mod special;

pub use error::{Error, Result};
pub use scalar::Real;

pub use dist::{CostDistribution, Distribution, ExpFamilyRatios, Gaussian, SignalModel};
pub use equilibrium::{
    Behavior, BehaviorShares, DesignerPayoff, EquilibriumOutcome, Incentives, ObjectivePreset,
    ScenarioSpec,
};
pub use optimizer::{OptimizationResult, RuleFamily, SearchConfig};
pub use rules::{RewardProbabilities, Rule};

/// Double-precision aliases for the common instantiation.
pub type Gaussian64 = Gaussian<f64>;
pub type Distribution64 = Distribution<f64>;
pub type SignalModel64 = SignalModel<f64>;
pub type Rule64 = Rule<f64>;
pub type ScenarioSpec64 = ScenarioSpec<f64>;
pub type DesignerPayoff64 = DesignerPayoff<f64>;
pub type EquilibriumOutcome64 = EquilibriumOutcome<f64>;
pub type SearchConfig64 = SearchConfig<f64>;
pub type OptimizationResult64 = OptimizationResult<f64>;
