//! Adaptive Simpson quadrature.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Integrates `f` over `[a, b]` by adaptive Simpson subdivision.
///
/// The usual Richardson criterion: a panel is accepted when the two-half
/// estimate agrees with the whole-panel estimate to within `15 * tol`.
pub fn adaptive_simpson<R: Real>(
    f: impl Fn(R) -> R,
    a: R,
    b: R,
    tol: R,
    max_depth: u32,
) -> Result<R> {
    if a == b {
        return Ok(R::zero());
    }
    let two = R::of(2.0);
    let six = R::of(6.0);
    let m = (a + b) / two;
    let fa = f(a);
    let fb = f(b);
    let fm = f(m);
    let whole = (b - a) / six * (fa + R::of(4.0) * fm + fb);
    simpson_rec(&f, a, b, fa, fm, fb, whole, tol, max_depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<R: Real>(
    f: &impl Fn(R) -> R,
    a: R,
    b: R,
    fa: R,
    fm: R,
    fb: R,
    whole: R,
    tol: R,
    depth: u32,
) -> Result<R> {
    let two = R::of(2.0);
    let six = R::of(6.0);
    let m = (a + b) / two;
    let lm = (a + m) / two;
    let rm = (m + b) / two;
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / six * (fa + R::of(4.0) * flm + fm);
    let right = (b - m) / six * (fm + R::of(4.0) * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= R::of(15.0) * tol {
        return Ok(left + right + delta / R::of(15.0));
    }
    if depth == 0 {
        return Err(Error::IntegrationFailure {
            lo: a.as_f64(),
            hi: b.as_f64(),
        });
    }
    let half_tol = tol / two;
    let l = simpson_rec(f, a, m, fa, flm, fm, left, half_tol, depth - 1)?;
    let r = simpson_rec(f, m, b, fm, frm, fb, right, half_tol, depth - 1)?;
    Ok(l + r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomial_exactly() {
        // Simpson is exact for cubics.
        let v = adaptive_simpson(|x: f64| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 1e-12, 30).unwrap();
        assert!((v - (4.0 - 4.0 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn integrates_gaussian_pdf_to_one() {
        let v = adaptive_simpson(
            |x: f64| crate::special::std_normal_pdf(x),
            -8.0,
            8.0,
            1e-12,
            40,
        )
        .unwrap();
        assert!((v - 1.0).abs() < 1e-10, "got {v}");
    }

    #[test]
    fn reports_non_convergence() {
        // Depth 0 cannot resolve a sharp kink to 1e-15.
        let r = adaptive_simpson(|x: f64| x.abs().sqrt(), -1.0, 1.0, 1e-15, 0);
        assert!(matches!(r, Err(Error::IntegrationFailure { .. })));
    }

    #[test]
    fn works_in_f32() {
        let v = adaptive_simpson(|x: f32| x.sin(), 0.0f32, std::f32::consts::PI, 1e-5, 20).unwrap();
        assert!((v - 2.0).abs() < 1e-4);
    }
}
