//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar the estimators, regressions and diagnostics are generic over.
///
/// Implemented for `f32` and `f64`. Quantities that are inherently
/// probabilistic bookkeeping (p-values from special functions, simulator
/// configuration) are computed in `f64` and converted at the boundary.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + FromStr
    + Display
    + Debug
    + Default
    + Sum
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Default absolute tolerance on the max-norm of the logistic score for `n` rows.
    fn irls_tolerance(n: usize) -> Self;

    /// Relative threshold below which a pivot is treated as a rank deficiency.
    fn rank_tolerance() -> Self;
}

impl Real for f64 {
    fn irls_tolerance(_n: usize) -> Self {
        1e-8
    }

    fn rank_tolerance() -> Self {
        1e-10
    }
}

impl Real for f32 {
    fn irls_tolerance(n: usize) -> Self {
        // single precision cannot resolve a score sum below ~n * eps
        1e-4 * (n.max(1) as f32)
    }

    fn rank_tolerance() -> Self {
        1e-5
    }
}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("finite literal is representable")
}

/// Converts a count into `T`.
#[inline]
pub fn count<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count is representable")
}

/// Lossy conversion to `f64` for reporting and special functions.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Numerically stable logistic function `1 / (1 + exp(-x))`.
#[inline]
pub fn expit<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + exp(x))` without overflow.
#[inline]
pub fn log1p_exp<T: Real>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
