//! Scalar abstraction: all numerical kernels are generic over the working
//! precision, instantiated for `f32` and `f64`.

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating-point scalar usable throughout the crate: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + NumAssign + rustfft::FftNum + std::fmt::Display
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Cast an `f64` constant into the working precision.
///
/// Panics only if the target type cannot represent any `f64`, which does not
/// happen for the supported scalar types.
#[inline]
pub fn cast<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant representable in scalar type")
}

/// Cast a `usize` into the working precision.
#[inline]
pub fn cast_usize<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("usize representable in scalar type")
}
