//! Dense `f64` tensors, a define-by-run tape for reverse-mode
//! differentiation, and the Adam optimizer.
//!
//! The primitive set is small on purpose: it covers fully connected
//! coordinate networks (affine layers, sine / ReLU activations), the mean
//! squared error, summation of branch losses, and the block-average
//! measurement operator.

mod adam;
mod tape;
mod tensor;
pub mod trig;

pub use adam::Adam;
pub use tape::{block_average, Gradients, Tape, Var};
pub use tensor::{linear_forward, Tensor};
