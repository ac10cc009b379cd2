//! Dense rank-2 tensors with a reverse-mode autodiff tape.
//!
//! Values are `ndarray::Array2`. Everything is generic over [`Real`] so the
//! same model code runs in `f32` for training and `f64` for gradient checks.

mod adam;
mod sparse;
mod tape;

use std::fmt::{Debug, Display};

pub use adam::{Adam, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use sparse::{CsrMatrix, SparseOperator};
pub use tape::{Gradients, Tape, Var, BCE_CLAMP};

pub trait Real:
    ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + PartialOrd
    + Debug
    + Display
    + Send
    + Sync
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::ops::Neg<Output = Self>
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn is_finite(self) -> bool;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            #[inline]
            fn from_f64(x: f64) -> Self {
                x as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            #[inline]
            fn ln(self) -> Self {
                <$t>::ln(self)
            }
            #[inline]
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            #[inline]
            fn is_finite(self) -> bool {
                <$t>::is_finite(self)
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// Element-wise cast between precisions.
pub fn cast<A: Real, B: Real>(x: &ndarray::Array2<A>) -> ndarray::Array2<B> {
    x.mapv(|v| B::from_f64(v.to_f64()))
}
