//! Scalar abstraction: every numeric pipeline in this crate is generic over
//! the floating-point type, so the same code runs in f32 for production and
//! f64 for oracle/gradient checking.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssignOps};

pub trait Scalar:
    Float + FromPrimitive + NumAssignOps + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from f64 (values are always in range for f32/f64).
    fn from_f64c(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to scalar")
    }

    fn to_f64c(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
