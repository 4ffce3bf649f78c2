use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point element type of every matrix, parameter and activation.
///
/// Implemented for `f32` (the training type) and `f64` (used where finite
/// difference checks need the headroom).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` constant into `Self`.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("scalar literal must be representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
