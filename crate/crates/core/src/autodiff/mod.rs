//! Dense tensors with define-by-run reverse-mode differentiation.
//!
//! A [`Graph`] records every primitive applied during a forward pass as a
//! node holding its output [`Tensor`] and enough saved state to run the
//! backward rule. Nodes are appended in execution order, so insertion order
//! is a topological order and [`Graph::backward`] simply walks it in
//! reverse. The graph is rebuilt for every forward pass.
//!
//! Everything is generic over [`Float`] so the same model code runs in
//! `f32` for training and in `f64` for finite-difference gradient checks.

mod gradcheck;
mod graph;
pub mod kernels;
mod tensor;

pub use gradcheck::{finite_diff_check, finite_diff_check_floor, GradCheck};
pub use graph::{BackwardReport, Graph, Mode, Var};
pub use tensor::Tensor;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign};

/// Scalar element type of a [`Tensor`].
pub trait Float:
    num_traits::Float
    + ndarray::LinalgScalar
    + AddAssign
    + MulAssign
    + Sum
    + Default
    + Debug
    + Send
    + Sync
    + 'static
{
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Float for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Float for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn stable_sigmoid<T: Float>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
