//! The layer/model abstraction shared by gradient checking and training.

use crate::error::Result;
use crate::param::Parameter;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Forward-pass mode. Train mode lets batch norm use (and update) batch
/// statistics; eval mode normalizes with running statistics only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Anything with a forward pass and a parameter list.
///
/// `parameters` returns each *distinct* parameter once, in a deterministic
/// order; tied and stage-shared weights therefore appear a single time.
pub trait Module<T: Scalar> {
    fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>>;
    fn parameters(&self) -> Vec<Parameter<T>>;
}
