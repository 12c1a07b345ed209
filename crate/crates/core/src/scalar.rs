//! Floating-point abstraction shared by every solver.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar the numerics are generic over (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal; panics only for values the type cannot hold.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in target float type")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("index representable in target float type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `x log x` with `0 log 0 = 0`; the log argument is floored at the
    /// smallest positive normal so underflowed cells stay finite.
    #[inline]
    fn xlogx(self) -> Self {
        if self <= Self::zero() {
            Self::zero()
        } else {
            self * self.max(Self::min_positive_value()).ln()
        }
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + Sum
        + Debug
        + Display
        + LowerExp
        + Default
        + Send
        + Sync
        + 'static
{
}

/// Density floor below which a velocity `m / ρ` is set to zero.
pub const RHO_FLOOR: f64 = 1e-14;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xlogx_convention() {
        assert_eq!(0.0f64.xlogx(), 0.0);
        assert_eq!((-1e-20f64).xlogx(), 0.0);
        assert!((std::f64::consts::E.xlogx() - std::f64::consts::E).abs() < 1e-15);
        assert!(1e-310f64.xlogx().is_finite());
        assert!((2.0f32.xlogx() - 2.0 * 2.0f32.ln()).abs() < 1e-6);
    }
}
