//! Scalar abstraction for the numeric core.
//!
//! Everything in this crate is generic over [`Real`], which is satisfied by
//! `f32` and `f64`. Concrete aliases for the common `f64` instantiation live
//! at the crate root.

use ndarray::{ArrayView1, LinalgScalar, ScalarOperand};
use num_traits::{Float, FloatConst, FromPrimitive, NumAssignOps};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar the solver is generic over.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssignOps
    + LinalgScalar
    + ScalarOperand
    + Sum<Self>
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into this scalar type.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("constant representable in scalar type")
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + NumAssignOps
        + LinalgScalar
        + ScalarOperand
        + Sum<Self>
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}

/// Infinity norm of a vector; zero for an empty vector.
pub fn inf_norm<T: Real>(v: ArrayView1<'_, T>) -> T {
    v.iter().fold(T::zero(), |acc, &x| acc.max(x.abs()))
}

/// Euclidean norm.
pub fn two_norm<T: Real>(v: ArrayView1<'_, T>) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}
