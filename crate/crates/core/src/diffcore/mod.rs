//! Minimal reverse-mode differentiation over dense `f64` tensors.
//!
//! Covers exactly the operations the detector needs, plus a finite-difference
//! harness ([`check_gradients`]) used throughout the test suite.

mod fft;
mod gradcheck;
mod graph;
mod ops;
mod tensor;

pub use gradcheck::{check_gradients, GradCheckEntry, GradCheckReport, ParamDeviation};
pub use graph::{Graph, NodeId};
pub use ops::{Padding, LEAKY_SLOPE};
pub use tensor::Tensor;

pub(crate) use fft::bins as spectral_bins;
