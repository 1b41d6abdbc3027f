//! Scalar abstraction for the differentiable core.
//!
//! The tape and all tensor kernels are generic over [`Scalar`] so the same
//! code runs in `f32` or `f64`. Everything above the autodiff layer uses the
//! [`crate::Real`] alias (`f64`): the model is tiny and the gradient checks
//! need the precision.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar usable by the tape.
pub trait Scalar:
    Float + NumAssign + FromPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Shorthand for lossy conversion from `f64` literals.
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("f64 conversion")
    }
}

impl<T> Scalar for T where
    T: Float + NumAssign + FromPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
}
