//! Floating-point abstraction used by every numeric kernel in the crate.
//!
//! All tensors, layers, and losses are generic over [`Scalar`] so the same
//! code path can run in `f32` (training, inference) and `f64` (gradient
//! checking against central finite differences, where `f32` round-off would
//! drown the comparison). The crate root exports [`crate::Real`] as the
//! default training precision.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Trait bound for every scalar type the numeric kernels accept.
///
/// `LinalgScalar` routes `ndarray::dot` through the blocked matmul backend,
/// `ScalarOperand` allows `&array * s` expressions, and the `num-traits`
/// bounds supply conversions plus the transcendental functions used by the
/// activations and losses.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + ScalarOperand
    + LinalgScalar
    + Sum<Self>
    + Send
    + Sync
    + Debug
    + Display
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand for lossy conversion of an `f64` literal into the working scalar.
///
/// Constants in the kernels are written as `f64` literals; this converts them
/// at the call site without sprinkling `S::from_f64(..).unwrap()` everywhere.
#[inline]
pub fn sc<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("f64 literal must convert into the working scalar")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_conversion_round_trips_in_both_precisions() {
        let a: f32 = sc(0.25);
        let b: f64 = sc(0.25);
        assert_eq!(a, 0.25f32);
        assert_eq!(b, 0.25f64);
    }

    fn dot_through_generic<S: Scalar>() -> S {
        let m = ndarray::Array2::<S>::from_elem((2, 3), sc(2.0));
        let v = ndarray::Array2::<S>::from_elem((3, 1), sc(0.5));
        m.dot(&v)[[0, 0]]
    }

    #[test]
    fn generic_dot_dispatches_for_f32_and_f64() {
        assert_eq!(dot_through_generic::<f32>(), 3.0);
        assert_eq!(dot_through_generic::<f64>(), 3.0);
    }
}
