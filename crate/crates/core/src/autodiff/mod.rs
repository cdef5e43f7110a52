//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] records primitives as they are evaluated; [`Tape::backward`]
//! walks the record in reverse. Parameters live in a [`ParamStore`] and are
//! bound to a tape per step with [`Tape::param`].

mod conv;
mod elementwise;
mod gradcheck;
mod param;
mod shape_ops;
mod spectral;
mod tape;
mod tensor;

pub use conv::{Conv1dSpec, Conv2dSpec};
pub use gradcheck::{grad_check, grad_check_params, GradCheckOptions, GradCheckReport};
pub use param::{ParamId, ParamStore, Parameter};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
