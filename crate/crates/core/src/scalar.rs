//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating point scalar the solver is generic over (`f32` or `f64`).
pub trait Real:
    Float + FloatConst + FromPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Two-component vector used for points and gradients.
pub type Vec2<T> = [T; 2];

#[inline]
pub fn dot<T: Real>(a: &Vec2<T>, b: &Vec2<T>) -> T {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn norm<T: Real>(a: &Vec2<T>) -> T {
    a[0].hypot(a[1])
}

#[inline]
pub fn axpy<T: Real>(alpha: T, x: &Vec2<T>, y: &Vec2<T>) -> Vec2<T> {
    [alpha * x[0] + y[0], alpha * x[1] + y[1]]
}

#[inline]
pub fn scale<T: Real>(alpha: T, x: &Vec2<T>) -> Vec2<T> {
    [alpha * x[0], alpha * x[1]]
}

#[inline]
pub fn sub<T: Real>(a: &Vec2<T>, b: &Vec2<T>) -> Vec2<T> {
    [a[0] - b[0], a[1] - b[1]]
}

/// 2x2 matrix stored row-major.
pub type Mat2<T> = [[T; 2]; 2];

#[inline]
pub fn mat_vec<T: Real>(m: &Mat2<T>, v: &Vec2<T>) -> Vec2<T> {
    [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
}
