//! Floating-point scalar abstraction: f32 or f64.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Trait bound for the scalar type the core math is generic over.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Copy + Debug + Display + Send + Sync + 'static
{
    /// Shorthand for lossy conversion from f64 literals.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 conversion")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("f64 conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Scalar usable with nalgebra's linear algebra (adds `RealField`).
pub trait GeomScalar: Scalar + nalgebra::RealField {}

impl<T: Scalar + nalgebra::RealField> GeomScalar for T {}
