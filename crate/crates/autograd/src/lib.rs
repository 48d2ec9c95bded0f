//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Tensors are immutable, reference-counted and row-major. Operations panic on
//! shape errors, the same way indexing does; fallible entry points live in the
//! crates built on top of this one.

mod conv;
mod elementwise;
mod gradcheck;
mod matmul;
mod norm;
mod param;
mod shape;
mod tensor;

pub use conv::Conv2dSpec;
pub use elementwise::{gelu, gelu_grad, sigmoid, softplus};
pub use gradcheck::{gradcheck, gradcheck_params, project, GradcheckOptions, GradcheckReport};
pub use norm::NORM_EPS;
pub use param::{Init, Param, ParamBuilder, ParamStore};
pub use tensor::{grad_enabled, no_grad, BackwardFn, NoGradGuard, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parameter `{0}` missing from checkpoint")]
    MissingParam(String),
    #[error("parameter `{name}` has shape {found:?}, expected {expected:?}")]
    ShapeMismatch { name: String, expected: Vec<usize>, found: Vec<usize> },
}

pub type Result<T> = std::result::Result<T, Error>;
