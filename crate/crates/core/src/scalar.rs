use num_traits::{Float, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

/// Real scalar used by the proportion, seriation and neighbor code.
///
/// Implemented for `f32` and `f64`. Counts never go through this trait; they
/// stay `u64` until a proportion or residual is formed.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Tolerance used when two objective values are considered tied.
    fn tie_eps() -> Self;

    fn from_count(c: u64) -> Self {
        Self::from_u64(c).expect("count representable as float")
    }

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {
    fn tie_eps() -> Self {
        1e-5
    }
}

impl Real for f64 {
    fn tie_eps() -> Self {
        1e-12
    }
}
