//! Cost and signal distributions.
//!
//! The cost distribution and the behavior-conditional signal distributions
//! are full-support continuous distributions on the real line. Gaussians are
//! the only family shipped today; the enum leaves room for more.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as RandDistribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::special;

/// Gaussian distribution parameterized by mean and standard deviation.
///
/// The second parameter is the standard deviation, not the variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gaussian<R> {
    mean: R,
    sd: R,
}

impl<R: Real> Gaussian<R> {
    pub fn new(mean: R, sd: R) -> Result<Self> {
        if !mean.is_finite() || !sd.is_finite() || sd <= R::zero() {
            return Err(Error::InvalidParameter(format!(
                "Gaussian requires finite mean and sd > 0, got mean={mean}, sd={sd}"
            )));
        }
        Ok(Self { mean, sd })
    }

    pub fn standard() -> Self {
        Self {
            mean: R::zero(),
            sd: R::one(),
        }
    }

    pub fn mean(&self) -> R {
        self.mean
    }

    pub fn sd(&self) -> R {
        self.sd
    }

    pub fn pdf(&self, x: R) -> R {
        let z = (x - self.mean) / self.sd;
        R::of(special::std_normal_pdf(z.as_f64())) / self.sd
    }

    pub fn cdf(&self, x: R) -> R {
        if x == R::infinity() {
            return R::one();
        }
        if x == R::neg_infinity() {
            return R::zero();
        }
        let z = (x - self.mean) / self.sd;
        R::of(special::std_normal_cdf(z.as_f64()))
    }

    pub fn quantile(&self, p: R) -> R {
        self.mean + self.sd * R::of(special::std_normal_quantile(p.as_f64()))
    }
}

/// A full-support continuous distribution on the reals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Distribution<R> {
    Gaussian(Gaussian<R>),
}

/// The compliance-cost distribution F.
pub type CostDistribution<R> = Distribution<R>;

impl<R: Real> Distribution<R> {
    pub fn gaussian(mean: R, sd: R) -> Result<Self> {
        Ok(Self::Gaussian(Gaussian::new(mean, sd)?))
    }

    pub fn pdf(&self, x: R) -> R {
        match self {
            Self::Gaussian(g) => g.pdf(x),
        }
    }

    pub fn cdf(&self, x: R) -> R {
        match self {
            Self::Gaussian(g) => g.cdf(x),
        }
    }

    pub fn quantile(&self, p: R) -> R {
        match self {
            Self::Gaussian(g) => g.quantile(p),
        }
    }

    pub fn mean(&self) -> R {
        match self {
            Self::Gaussian(g) => g.mean(),
        }
    }

    /// Scale parameter used to size search grids (the sd for Gaussians).
    pub fn scale(&self) -> R {
        match self {
            Self::Gaussian(g) => g.sd(),
        }
    }

    /// Draws `n` values. Deterministic for a given seed, independent of
    /// thread scheduling.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<R> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample_with(&mut rng)).collect()
    }

    pub fn sample_with(&self, rng: &mut impl rand::Rng) -> R {
        match self {
            Self::Gaussian(g) => {
                let z: f64 = StandardNormal.sample(rng);
                g.mean() + g.sd() * R::of(z)
            }
        }
    }
}

/// Behavior-conditional signal distributions: g_0 and g_1 always, g_chi
/// when the cheating behavior is modeled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalModel<R> {
    pub g0: Distribution<R>,
    pub g1: Distribution<R>,
    #[serde(default = "none_dist", skip_serializing_if = "Option::is_none")]
    pub g_chi: Option<Distribution<R>>,
}

fn none_dist<R>() -> Option<Distribution<R>> {
    None
}

impl<R: Real> SignalModel<R> {
    pub fn baseline(g0: Distribution<R>, g1: Distribution<R>) -> Self {
        Self {
            g0,
            g1,
            g_chi: None,
        }
    }

    pub fn with_cheating(
        g0: Distribution<R>,
        g_chi: Distribution<R>,
        g1: Distribution<R>,
    ) -> Self {
        Self {
            g0,
            g1,
            g_chi: Some(g_chi),
        }
    }

    pub fn has_cheating(&self) -> bool {
        self.g_chi.is_some()
    }

    /// Union of the per-behavior `mean +/- k*sd` intervals.
    pub fn support_hint(&self, k: R) -> (R, R) {
        let mut lo = R::infinity();
        let mut hi = R::neg_infinity();
        for d in self.all() {
            lo = lo.min(d.mean() - k * d.scale());
            hi = hi.max(d.mean() + k * d.scale());
        }
        (lo, hi)
    }

    fn all(&self) -> Vec<&Distribution<R>> {
        let mut v = vec![&self.g0, &self.g1];
        if let Some(gc) = &self.g_chi {
            v.push(gc);
        }
        v
    }

    /// True iff every required likelihood ratio (g1/g0, and g1/g_chi,
    /// g_chi/g0 when cheating is present) is strictly increasing.
    ///
    /// Uses the exact mean-ordering criterion when every distribution is
    /// Gaussian with a common variance; otherwise checks log-likelihood
    /// ratios on `n` grid points spanning `[grid_lo, grid_hi]`.
    pub fn check_mlrp(&self, grid_lo: R, grid_hi: R, n: usize) -> Result<bool> {
        if n < 2 || grid_lo >= grid_hi {
            return Err(Error::InvalidParameter(format!(
                "MLRP check needs n >= 2 and grid_lo < grid_hi, got n={n}, [{grid_lo}, {grid_hi}]"
            )));
        }
        if let Some(ok) = self.mlrp_gaussian_common_variance() {
            return Ok(ok);
        }
        let pairs = self.mlrp_pairs();
        for (num, den, _) in &pairs {
            let mut prev = R::neg_infinity();
            for i in 0..n {
                let t = R::from_usize(i).unwrap() / R::from_usize(n - 1).unwrap();
                let x = grid_lo + (grid_hi - grid_lo) * t;
                let pn = num.pdf(x);
                let pd = den.pdf(x);
                if !pn.is_finite() || !pd.is_finite() || pd <= R::zero() || pn <= R::zero() {
                    return Err(Error::InvalidModel(format!(
                        "non-positive or non-finite density at s={x}"
                    )));
                }
                let llr = pn.ln() - pd.ln();
                if llr <= prev {
                    return Ok(false);
                }
                prev = llr;
            }
        }
        Ok(true)
    }

    /// Checks MLRP over the default grid: 4001 points on the union of the
    /// per-behavior 6-sigma intervals.
    pub fn check_mlrp_default(&self) -> Result<bool> {
        let (lo, hi) = self.support_hint(R::of(6.0));
        self.check_mlrp(lo, hi, 4001)
    }

    fn mlrp_pairs(&self) -> Vec<(&Distribution<R>, &Distribution<R>, &'static str)> {
        match &self.g_chi {
            None => vec![(&self.g1, &self.g0, "g1/g0")],
            Some(gc) => vec![
                (&self.g1, &self.g0, "g1/g0"),
                (&self.g1, gc, "g1/g_chi"),
                (gc, &self.g0, "g_chi/g0"),
            ],
        }
    }

    fn mlrp_gaussian_common_variance(&self) -> Option<bool> {
        let gs: Vec<&Gaussian<R>> = self
            .all()
            .into_iter()
            .map(|d| match d {
                Distribution::Gaussian(g) => g,
            })
            .collect();
        let sd0 = gs[0].sd();
        if gs.iter().any(|g| g.sd() != sd0) {
            return None;
        }
        // equal variances: the log-ratio is linear, MLRP iff means strictly ordered
        let ok = match &self.g_chi {
            None => self.g1.mean() > self.g0.mean(),
            Some(gc) => self.g1.mean() > gc.mean() && gc.mean() > self.g0.mean(),
        };
        Some(ok)
    }

    /// Extracts the exponential-family coefficients of the two likelihood
    /// ratios against g_chi. Requires three Gaussian distributions with a
    /// common variance and means mu_0 < mu_chi < mu_1.
    pub fn exp_family_ratios(&self) -> Result<ExpFamilyRatios<R>> {
        let gc = self.g_chi.as_ref().ok_or_else(|| {
            Error::UnsupportedFamily("exp_family_ratios requires a cheating signal model".into())
        })?;
        let (Distribution::Gaussian(g0), Distribution::Gaussian(g1), Distribution::Gaussian(gc)) =
            (&self.g0, &self.g1, gc);
        let sd = g0.sd();
        if g1.sd() != sd || gc.sd() != sd {
            return Err(Error::UnsupportedFamily(
                "exp_family_ratios requires a common variance".into(),
            ));
        }
        let (mu0, muc, mu1) = (g0.mean(), gc.mean(), g1.mean());
        if !(mu0 < muc && muc < mu1) {
            return Err(Error::InvalidModel(format!(
                "exp_family_ratios requires mu_0 < mu_chi < mu_1, got ({mu0}, {muc}, {mu1})"
            )));
        }
        let var = sd * sd;
        let two = R::of(2.0);
        Ok(ExpFamilyRatios {
            a: (mu1 - muc) / var,
            b: (muc * muc - mu1 * mu1) / (two * var),
            c: (muc - mu0) / var,
            d: (muc * muc - mu0 * mu0) / (two * var),
        })
    }
}

/// Coefficients such that g1(s)/g_chi(s) = exp(a s + b) and
/// g0(s)/g_chi(s) = exp(-c s + d), with a > 0 and c > 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpFamilyRatios<R> {
    pub a: R,
    pub b: R,
    pub c: R,
    pub d: R,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(mean: f64, sd: f64) -> Distribution<f64> {
        Distribution::gaussian(mean, sd).unwrap()
    }

    #[test]
    fn cdf_reference_points() {
        assert!((g(0.0, 1.0).cdf(0.0) - 0.5).abs() < 1e-15);
        // sincere compliance in the first worked example: F(0) with N(0.5, sd 0.5)
        assert!((g(0.5, 0.5).cdf(0.0) - 0.15865525393145707).abs() < 1e-12);
        assert!((g(2.0, 1.0).cdf(1.11) - 0.18673294303717264).abs() < 1e-12);
    }

    #[test]
    fn cdf_strictly_increasing_on_random_grid() {
        use rand::Rng;
        let d = g(0.3, 1.7);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut xs: Vec<f64> = (0..200).map(|_| rng.gen_range(-8.0..8.0)).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in xs.windows(2) {
            if w[1] > w[0] {
                assert!(d.cdf(w[1]) > d.cdf(w[0]), "cdf not strict at {:?}", w);
            }
        }
    }

    #[test]
    fn quantile_inverts_cdf_over_six_sigma() {
        let d = g(0.5, 0.5);
        let mut x = 0.5 - 3.0; // mu - 6 sd
        while x <= 0.5 + 3.0 {
            // Tolerance grows toward the upper tail, where cdf saturates
            // toward 1 and an ulp of p costs ~ sd * ulp / pdf in x.
            let back = d.quantile(d.cdf(x));
            assert!((back - x).abs() < 1e-7, "x={x} back={back}");
            x += 0.01;
        }
    }

    #[test]
    fn pdf_integrates_to_one() {
        let d = g(1.0, 0.8);
        let total = crate::quad::adaptive_simpson(
            |x| d.pdf(x),
            1.0 - 8.0 * 0.8,
            1.0 + 8.0 * 0.8,
            1e-10,
            40,
        )
        .unwrap();
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn mlrp_gaussian_mean_shift_true() {
        let m = SignalModel::baseline(g(0.0, 1.0), g(1.0, 1.0));
        assert!(m.check_mlrp(-6.0, 7.0, 101).unwrap());
    }

    #[test]
    fn mlrp_variance_shift_false() {
        // ratio of N(0,4) to N(0,1) is U-shaped, not monotone
        let m = SignalModel::baseline(g(0.0, 1.0), g(0.0, 2.0));
        assert!(!m.check_mlrp(-6.0, 6.0, 101).unwrap());
    }

    #[test]
    fn mlrp_cheating_triple_true() {
        let m = SignalModel::with_cheating(g(0.0, 1.0), g(1.75, 1.0), g(2.0, 1.0));
        assert!(m.check_mlrp_default().unwrap());
    }

    #[test]
    fn mlrp_grid_agrees_with_analytic_shortcut() {
        // force the grid path with unequal sds that still satisfy MLRP? A
        // Gaussian pair with unequal sds never satisfies strict MLRP on all
        // of R; the grid over a finite window can still detect the failure
        // when the turning point is inside the window.
        let m = SignalModel::baseline(g(0.0, 1.0), g(3.0, 1.2));
        // turning point of the llr is at the parabola vertex, inside [-20, 20]
        assert!(!m.check_mlrp(-20.0, 20.0, 2001).unwrap());
    }

    #[test]
    fn exp_family_ratio_coefficients() {
        let m = SignalModel::with_cheating(g(0.0, 1.0), g(1.5, 1.0), g(2.0, 1.0));
        let r = m.exp_family_ratios().unwrap();
        assert!((r.a - 0.5).abs() < 1e-14);
        assert!((r.c - 1.5).abs() < 1e-14);

        let m2 = SignalModel::with_cheating(g(0.0, 1.0), g(1.75, 1.0), g(2.0, 1.0));
        let r2 = m2.exp_family_ratios().unwrap();
        assert!((r2.a - 0.25).abs() < 1e-14);
        assert!((r2.c - 1.75).abs() < 1e-14);
    }

    #[test]
    fn exp_family_ratios_reconstruct_densities() {
        let m = SignalModel::with_cheating(g(0.0, 1.0), g(0.5, 1.0), g(1.0, 1.0));
        let r = m.exp_family_ratios().unwrap();
        let gc = m.g_chi.unwrap();
        let mut s = -6.0;
        while s <= 7.0 {
            let lhs1 = (r.a * s + r.b).exp() * gc.pdf(s);
            let rhs1 = m.g1.pdf(s);
            assert!(((lhs1 - rhs1) / rhs1).abs() < 1e-10, "g1 mismatch at {s}");
            let lhs0 = (-r.c * s + r.d).exp() * gc.pdf(s);
            let rhs0 = m.g0.pdf(s);
            assert!(((lhs0 - rhs0) / rhs0).abs() < 1e-10, "g0 mismatch at {s}");
            s += 0.037;
        }
    }

    #[test]
    fn exp_family_ratios_rejects_uncommon_variance() {
        let m = SignalModel::with_cheating(g(0.0, 1.0), g(1.0, 1.5), g(2.0, 1.0));
        assert!(matches!(
            m.exp_family_ratios(),
            Err(Error::UnsupportedFamily(_))
        ));
    }

    #[test]
    fn sampling_is_deterministic_and_calibrated() {
        let d = g(0.0, 1.0);
        let a = d.sample(1_000_000, 42);
        let b = d.sample(1_000_000, 42);
        assert_eq!(a, b);
        let mean: f64 = a.iter().sum::<f64>() / a.len() as f64;
        assert!(mean.abs() < 0.004, "sample mean {mean}");

        let d2 = g(0.5, 0.5);
        let s = d2.sample(1_000_000, 7);
        let frac_below0 = s.iter().filter(|&&x| x < 0.0).count() as f64 / s.len() as f64;
        assert!(
            (frac_below0 - 0.1587).abs() < 0.0015,
            "fraction below zero {frac_below0}"
        );
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(Distribution::gaussian(0.0, 0.0).is_err());
        assert!(Distribution::gaussian(f64::NAN, 1.0).is_err());
    }
}
