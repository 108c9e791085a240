//! Small differentiable-computation substrate: dense tensors, a recording
//! tape with reverse-mode gradients, Adam, and a finite-difference checker.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use params::{adam_step, AdamConfig, Gradients, ParamStore};
pub use tape::{compute_gradients, sigmoid, Tape, Var};
pub use tensor::Tensor;
