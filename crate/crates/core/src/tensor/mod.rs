//! Dense tensors and tape-based reverse-mode differentiation.

mod dense;
pub mod gradcheck;
pub mod kernels;
mod ops;
mod scalar;
mod tape;

pub use dense::Tensor;
pub use ops::ScanMode;
pub use scalar::{DType, Scalar};
pub use tape::{Gradients, Tape, Var};
