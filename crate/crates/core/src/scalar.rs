//! Scalar abstraction so the core math works for both `f32` and `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar usable by every numeric routine in this crate.
pub trait Scalar:
    Float + NumAssign + FromPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, for literals in generic code.
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Relative gap below which a singular value is treated as zero.
    fn singular_threshold() -> Self;
}

impl Scalar for f32 {
    fn singular_threshold() -> Self {
        1e-6
    }
}

impl Scalar for f64 {
    fn singular_threshold() -> Self {
        1e-12
    }
}
