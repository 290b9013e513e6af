//! Dense tensors, a recorded computation with reverse-mode accumulation,
//! and a finite-difference gradient checker.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{
    finite_difference, grad_check, relative_error, GradientReport, ParamCheck, DEFAULT_STEP, PASS_TOLERANCE,
    RELATIVE_ERROR_FLOOR,
};
pub use tape::{forward, reverse_accumulate, sigmoid, softmax, Axis, Gradients, NodeId, Op, Tape};
pub use tensor::Tensor;
