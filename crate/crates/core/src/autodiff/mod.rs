//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] is rebuilt for every forward pass. Values are recorded as they
//! are computed, and [`Tape::backward`] walks the record once in reverse.

mod gradcheck;
pub(crate) mod kernels;
mod tape;
mod tensor;

pub use gradcheck::{gradient_check, gradient_check_many};
pub use tape::{Gradients, Primitive, Tape, Var};
pub use tensor::Tensor;
