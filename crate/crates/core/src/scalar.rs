//! Scalar abstraction for the closed-form pieces of the library.
//!
//! Radial kernels, analytic manifolds and error metrics are written once over
//! [`Scalar`]; the dense operator pipeline is LAPACK-backed and fixed to `f64`
//! (see [`crate::Real`]).

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }
}

impl<T> Scalar for T where
    T: Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
}
