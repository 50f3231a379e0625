//! Scalar abstraction: the solver is generic over `f32` and `f64`.

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the crate is generic over.
///
/// Special functions (erf and friends) are evaluated through `f64` kernels
/// and converted back, so `f32` instantiations get full double-precision
/// internals for those paths.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::iter::Sum
    + Send
    + Sync
    + 'static
{
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `n` evenly spaced points covering `[lo, hi]` inclusive; `n >= 2`.
pub fn linspace<R: Real>(lo: R, hi: R, n: usize) -> Vec<R> {
    assert!(n >= 2, "linspace needs at least two points");
    let step = (hi - lo) / R::of((n - 1) as f64);
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + step * R::of(i as f64)
            }
        })
        .collect()
}
