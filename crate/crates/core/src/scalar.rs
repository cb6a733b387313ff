//! Scalar abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar the simulation, encoders and factorization are generic over.
///
/// Implemented for `f32` and `f64`. The pipeline runs on `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("finite scalar converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// 2D vector helpers on `[T; 2]`.
pub(crate) mod v2 {
    use super::Real;

    #[inline]
    pub fn add<T: Real>(a: [T; 2], b: [T; 2]) -> [T; 2] {
        [a[0] + b[0], a[1] + b[1]]
    }

    #[inline]
    pub fn sub<T: Real>(a: [T; 2], b: [T; 2]) -> [T; 2] {
        [a[0] - b[0], a[1] - b[1]]
    }

    #[inline]
    pub fn scale<T: Real>(a: [T; 2], s: T) -> [T; 2] {
        [a[0] * s, a[1] * s]
    }

    #[inline]
    pub fn dot<T: Real>(a: [T; 2], b: [T; 2]) -> T {
        a[0] * b[0] + a[1] * b[1]
    }

    /// z-component of the 3D cross product.
    #[inline]
    pub fn cross<T: Real>(a: [T; 2], b: [T; 2]) -> T {
        a[0] * b[1] - a[1] * b[0]
    }

    /// Counter-clockwise perpendicular.
    #[inline]
    pub fn perp<T: Real>(a: [T; 2]) -> [T; 2] {
        [-a[1], a[0]]
    }

    #[inline]
    pub fn norm<T: Real>(a: [T; 2]) -> T {
        a[0].hypot(a[1])
    }

    #[inline]
    pub fn lerp<T: Real>(a: [T; 2], b: [T; 2], t: T) -> [T; 2] {
        [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]
    }

    #[inline]
    pub fn unit<T: Real>(angle: T) -> [T; 2] {
        [angle.cos(), angle.sin()]
    }
}
