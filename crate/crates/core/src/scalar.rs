//! Scalar abstraction shared by every numeric module.
//!
//! Matrix storage and most arithmetic go through `nalgebra`; dense
//! factorizations in hot loops are delegated to `faer`. A [`Real`] therefore
//! has to satisfy both libraries' field traits, plus the `num-traits`
//! conversions used to move constants and reports across the `f64` boundary.

use std::fmt::{Debug, Display};

use num_traits::{FromPrimitive, ToPrimitive};

pub trait Real:
    nalgebra::RealField
    + faer::traits::RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + Display
    + Debug
    + Default
    + Send
    + Sync
    + 'static
{
    /// Machine epsilon.
    fn eps() -> Self;

    /// Converts an `f64` literal. Never fails for the float types we support.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// `max(tol, 1000 eps)`: absolute tolerances stated for `f64` stay
    /// exact there and widen to something meaningful for `f32`.
    #[inline]
    fn tol(tol: f64) -> Self {
        let t = Self::lit(tol);
        let floor = Self::eps() * Self::lit(1e3);
        if t > floor {
            t
        } else {
            floor
        }
    }
}

impl Real for f32 {
    #[inline]
    fn eps() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    #[inline]
    fn eps() -> Self {
        f64::EPSILON
    }
}
