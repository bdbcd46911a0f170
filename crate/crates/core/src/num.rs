use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Scalar type for label vectors, datasets, and the classifier.
///
/// Implemented by `f32` and `f64`; group arithmetic stays in exact
/// integers and never touches this trait.
pub trait Real:
    Float + NumAssignOps + Sum + FromPrimitive + ToPrimitive + Debug + Display + Default + 'static
{
    /// Lossy conversion from `f64`, used for literals and tolerances.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 conversion")
    }
}

impl<T> Real for T where
    T: Float + NumAssignOps + Sum + FromPrimitive + ToPrimitive + Debug + Display + Default + 'static
{
}
