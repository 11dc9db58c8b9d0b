//! Floating point scalar abstraction shared by the resampling, metric and
//! fusion code.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real sample type: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + 'static
{
    /// Lossless-enough conversion from `f64` constants.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 constant fits the scalar type")
    }

    fn from_usize_exact(v: usize) -> Self {
        Self::from_usize(v).expect("usize fits the scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Sums `terms` so that the result is bit-identical when the sequence is
/// reversed: outermost pairs are added first, working inwards.
pub(crate) fn mirror_sum<T: Real>(terms: &[T]) -> T {
    let n = terms.len();
    let mut acc = T::zero();
    for k in 0..n / 2 {
        acc = acc + (terms[k] + terms[n - 1 - k]);
    }
    if n % 2 == 1 {
        acc = acc + terms[n / 2];
    }
    acc
}
