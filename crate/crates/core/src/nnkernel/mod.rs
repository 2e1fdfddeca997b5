//! Dense-array kernel with hand-written forward and backward passes.
//!
//! Every op is generic over [`Scalar`] so the same code trains in `f32` and is
//! gradient-checked in `f64`. Matrix products go through `matrixmultiply`.

mod activation;
mod adam;
mod conv;
mod dense;
pub mod gradcheck;
mod init;
mod pool;
mod tensor;

use thiserror::Error;

pub use activation::{bce_loss, relu, relu_backward, sigmoid, sigmoid_scalar, BCE_EPS};
pub use adam::{AdamConfig, AdamState, ParamRef};
pub use conv::{conv1d_backward, conv1d_forward, conv_output_len, Conv1DGrads, Conv1DParams};
pub(crate) use conv::conv1d_backward_parts;
pub use dense::{dense_backward, dense_forward, DenseGrads, DenseParams};
pub use gradcheck::{grad_check, Evaluation, GradCheckConfig, GradCheckReport};
pub use init::{glorot_limit, glorot_uniform, uniform};
pub use pool::{maxpool1d, maxpool1d_backward, pool_output_len};
pub use tensor::{Precision, Scalar, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("{0}")]
    Config(String),
}
