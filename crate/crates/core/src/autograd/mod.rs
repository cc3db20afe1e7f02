//! Minimal reverse-mode automatic differentiation over dense NCHW tensors.
//!
//! Single-threaded and allocation-simple: every forward op records its output
//! on a [`Graph`] tape, and [`Graph::backward`] sweeps the tape in reverse.
//! Results are bit-reproducible for identical inputs.

mod conv;
pub mod gradcheck;
mod graph;
mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use tensor::{matmul, Scalar, Tensor};
