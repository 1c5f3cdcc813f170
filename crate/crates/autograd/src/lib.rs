//! Reverse-mode automatic differentiation over dense, row-major CPU tensors.
//!
//! The crate is deliberately small: a [`Tensor`] owns a contiguous buffer, a
//! [`Graph`] records every operation applied to [`Var`] handles together with
//! a backward closure, and [`Graph::backward`] walks the tape in reverse.
//! Everything is generic over [`Float`] so the same network code runs in
//! `f32` for training and `f64` for finite-difference gradient checks.

mod error;
mod float;
pub mod gradcheck;
mod graph;
pub mod kernels;
mod ops;
mod tensor;

pub use error::{Result, TensorError};
pub use float::Float;
pub use graph::{Gradients, Graph, Var};
pub use tensor::Tensor;
