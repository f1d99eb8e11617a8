//! Tape-recorded tensor operations.
//!
//! Each op computes its forward value and, when a tape is active and an
//! operand is tracked, pushes a backward rule onto the tape. Ops that can
//! only fail through misuse of internal invariants return `Tensor` directly;
//! shape-checked ops return `Result`.

mod conv;
mod elementwise;
mod linalg;
mod loss;
mod norm;
mod shape;

pub use conv::{conv2d, global_avg_pool, maxpool2d};
pub use elementwise::{add, add_broadcast, gelu, mul, relu, scale, sum_all, weighted_sum};
pub use linalg::{bmm, matmul, transpose};
pub use loss::cross_entropy;
pub use norm::{batch_norm2d, layer_norm, softmax_lastdim};
pub use shape::{concat_tokens, expand_leading, narrow, permute, reshape, token_at};

/// Activation kinds accepted by [`crate::nn::FfnLayer`] and friends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Gelu,
}

impl Activation {
    pub fn apply<T: crate::scalar::Scalar>(
        self,
        x: &crate::tensor::Tensor<T>,
    ) -> crate::tensor::Tensor<T> {
        match self {
            Activation::Relu => relu(x),
            Activation::Gelu => gelu(x),
        }
    }
}
