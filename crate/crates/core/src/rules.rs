//! Classification rules and their reward probabilities.

use serde::{Deserialize, Serialize};

use crate::dist::{Distribution, SignalModel};
use crate::error::{Error, Result};
use crate::quad::adaptive_simpson;
use crate::scalar::Real;

/// A classification rule: the probability of a positive decision as a
/// function of the observed signal.
///
/// `Binned` carries strictly increasing finite interior edges; with `m`
/// edges the rule has `m + 1` cells, the first and last being the unbounded
/// tails, each with its own acceptance probability in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Rule<R> {
    PositiveThreshold { tau: R },
    NegativeThreshold { tau: R },
    InnerTwoCut { tau_lo: R, tau_hi: R },
    OuterTwoCut { tau_lo: R, tau_hi: R },
    Binned { edges: Vec<R>, probs: Vec<R> },
}

impl<R: Real> Rule<R> {
    pub fn positive_threshold(tau: R) -> Self {
        Self::PositiveThreshold { tau }
    }

    pub fn negative_threshold(tau: R) -> Self {
        Self::NegativeThreshold { tau }
    }

    pub fn inner_two_cut(tau_lo: R, tau_hi: R) -> Result<Self> {
        if !(tau_lo < tau_hi) {
            return Err(Error::InvalidParameter(format!(
                "two-cut rule requires tau_lo < tau_hi, got ({tau_lo}, {tau_hi})"
            )));
        }
        Ok(Self::InnerTwoCut { tau_lo, tau_hi })
    }

    pub fn outer_two_cut(tau_lo: R, tau_hi: R) -> Result<Self> {
        if !(tau_lo < tau_hi) {
            return Err(Error::InvalidParameter(format!(
                "two-cut rule requires tau_lo < tau_hi, got ({tau_lo}, {tau_hi})"
            )));
        }
        Ok(Self::OuterTwoCut { tau_lo, tau_hi })
    }

    pub fn binned(edges: Vec<R>, probs: Vec<R>) -> Result<Self> {
        if probs.len() != edges.len() + 1 {
            return Err(Error::InvalidParameter(format!(
                "binned rule needs one probability per cell: {} edges imply {} cells, got {}",
                edges.len(),
                edges.len() + 1,
                probs.len()
            )));
        }
        if edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidParameter(
                "binned rule edges must be finite".into(),
            ));
        }
        if edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter(
                "binned rule edges must be strictly increasing".into(),
            ));
        }
        if probs.iter().any(|p| !(*p >= R::zero() && *p <= R::one())) {
            return Err(Error::InvalidParameter(
                "binned rule probabilities must lie in [0, 1]".into(),
            ));
        }
        Ok(Self::Binned { edges, probs })
    }

    /// The acceptance probability at signal `s`. Boundaries are included in
    /// the rewarded region, matching the rule definitions; this convention
    /// is measure-zero under continuous signals.
    pub fn accept_prob(&self, s: R) -> R {
        match self {
            Self::PositiveThreshold { tau } => {
                if s >= *tau {
                    R::one()
                } else {
                    R::zero()
                }
            }
            Self::NegativeThreshold { tau } => {
                if s <= *tau {
                    R::one()
                } else {
                    R::zero()
                }
            }
            Self::InnerTwoCut { tau_lo, tau_hi } => {
                if s >= *tau_lo && s <= *tau_hi {
                    R::one()
                } else {
                    R::zero()
                }
            }
            Self::OuterTwoCut { tau_lo, tau_hi } => {
                if s > *tau_lo && s < *tau_hi {
                    R::zero()
                } else {
                    R::one()
                }
            }
            Self::Binned { edges, probs } => {
                let idx = edges.partition_point(|e| *e < s);
                probs[idx]
            }
        }
    }

    /// S_beta: the probability of a reward under this rule when the signal
    /// is drawn from `dist`, in closed form via the CDF.
    pub fn reward_probability(&self, dist: &Distribution<R>) -> R {
        match self {
            Self::PositiveThreshold { tau } => R::one() - dist.cdf(*tau),
            Self::NegativeThreshold { tau } => dist.cdf(*tau),
            Self::InnerTwoCut { tau_lo, tau_hi } => dist.cdf(*tau_hi) - dist.cdf(*tau_lo),
            Self::OuterTwoCut { tau_lo, tau_hi } => {
                R::one() - (dist.cdf(*tau_hi) - dist.cdf(*tau_lo))
            }
            Self::Binned { edges, probs } => {
                let mut total = R::zero();
                let mut prev_cdf = R::zero();
                for (i, p) in probs.iter().enumerate() {
                    let upper = if i < edges.len() {
                        dist.cdf(edges[i])
                    } else {
                        R::one()
                    };
                    total = total + *p * (upper - prev_cdf);
                    prev_cdf = upper;
                }
                total
            }
        }
    }

    /// Independent integration path: adaptive quadrature of
    /// `integral g(x) delta(x) dx`, splitting at the rule's breakpoints so
    /// each panel has a constant acceptance probability.
    pub fn quadrature_reward_probability(&self, dist: &Distribution<R>) -> Result<R> {
        let k = R::of(10.0);
        let lo = dist.mean() - k * dist.scale();
        let hi = dist.mean() + k * dist.scale();
        let mut cuts: Vec<R> = vec![lo];
        for b in self.breakpoints() {
            if b > lo && b < hi {
                cuts.push(b);
            }
        }
        cuts.push(hi);
        cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));

        let mut total = R::zero();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if !(a < b) {
                continue;
            }
            let mid = (a + b) / R::of(2.0);
            let p = self.accept_prob(mid);
            if p == R::zero() {
                continue;
            }
            let mass = adaptive_simpson(|x| dist.pdf(x), a, b, R::of(1e-12), 48)?;
            total = total + p * mass;
        }
        Ok(total)
    }

    fn breakpoints(&self) -> Vec<R> {
        match self {
            Self::PositiveThreshold { tau } | Self::NegativeThreshold { tau } => vec![*tau],
            Self::InnerTwoCut { tau_lo, tau_hi } | Self::OuterTwoCut { tau_lo, tau_hi } => {
                vec![*tau_lo, *tau_hi]
            }
            Self::Binned { edges, .. } => edges.clone(),
        }
    }

    /// TPR, FPR, TNR, FNR of the rule under the signal model.
    pub fn rates(&self, model: &SignalModel<R>) -> Rates<R> {
        let tpr = self.reward_probability(&model.g1);
        let fpr = self.reward_probability(&model.g0);
        Rates {
            tpr,
            fpr,
            tnr: R::one() - fpr,
            fnr: R::one() - tpr,
        }
    }

    /// Per-behavior reward probabilities S_0, S_1, and S_chi when present.
    pub fn reward_probabilities(&self, model: &SignalModel<R>) -> RewardProbabilities<R> {
        RewardProbabilities {
            s0: self.reward_probability(&model.g0),
            s1: self.reward_probability(&model.g1),
            s_chi: model
                .g_chi
                .as_ref()
                .map(|gc| self.reward_probability(gc)),
        }
    }
}

/// Confusion-matrix rates of a rule under a signal model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Rates<R> {
    pub tpr: R,
    pub fpr: R,
    pub tnr: R,
    pub fnr: R,
}

/// Conditional reward probabilities per behavior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RewardProbabilities<R> {
    pub s0: R,
    pub s1: R,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_chi: Option<R>,
}
