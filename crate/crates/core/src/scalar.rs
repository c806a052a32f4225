//! Scalar abstraction over the floating-point element type.
//!
//! All numerical modules are generic over [`Scalar`] so the same code runs
//! in `f32` (training, dataset storage) and `f64` (bound computation,
//! gradient checks). Concrete aliases live at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, NumAssign};

/// Floating-point scalar: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + NumAssign + Sum + Send + Sync + Debug + Display + 'static
{
    /// Lossy conversion from `f64` (identity for `f64`).
    fn of(x: f64) -> Self;

    /// Widen to `f64` (identity for `f64`).
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}
