//! Normalization layers wrapping the tape ops with learned parameters.

use crate::error::Result;
use crate::module::{Mode, Module};
use crate::ops;
use crate::param::{InitKind, Parameter};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub struct LayerNorm<T: Scalar> {
    gamma: Parameter<T>,
    beta: Parameter<T>,
    eps: f64,
}

impl<T: Scalar> LayerNorm<T> {
    pub fn new(prefix: &str, dim: usize) -> Self {
        LayerNorm {
            gamma: Parameter::new(format!("{prefix}.gamma"), vec![dim], InitKind::Ones),
            beta: Parameter::new(format!("{prefix}.beta"), vec![dim], InitKind::Zeros),
            eps: 1e-5,
        }
    }

    pub fn gamma(&self) -> &Parameter<T> {
        &self.gamma
    }

    pub fn beta(&self) -> &Parameter<T> {
        &self.beta
    }
}

impl<T: Scalar> Module<T> for LayerNorm<T> {
    fn forward(&self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        ops::layer_norm(x, &self.gamma.tracked(), &self.beta.tracked(), self.eps)
    }

    fn parameters(&self) -> Vec<Parameter<T>> {
        vec![self.gamma.clone(), self.beta.clone()]
    }
}

/// Per-channel batch norm with running statistics kept as non-trainable
/// buffer parameters (so they serialize but are never counted or stepped).
pub struct BatchNorm2d<T: Scalar> {
    gamma: Parameter<T>,
    beta: Parameter<T>,
    running_mean: Parameter<T>,
    running_var: Parameter<T>,
    eps: f64,
    momentum: f64,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(prefix: &str, channels: usize) -> Self {
        BatchNorm2d {
            gamma: Parameter::new(format!("{prefix}.gamma"), vec![channels], InitKind::Ones),
            beta: Parameter::new(format!("{prefix}.beta"), vec![channels], InitKind::Zeros),
            running_mean: Parameter::buffer(
                format!("{prefix}.running_mean"),
                vec![channels],
                InitKind::Zeros,
            ),
            running_var: Parameter::buffer(
                format!("{prefix}.running_var"),
                vec![channels],
                InitKind::Ones,
            ),
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn gamma(&self) -> &Parameter<T> {
        &self.gamma
    }

    pub fn running_mean(&self) -> &Parameter<T> {
        &self.running_mean
    }

    pub fn running_var(&self) -> &Parameter<T> {
        &self.running_var
    }

    /// Puts the layer in an exact pass-through state for eval-mode tests:
    /// gamma 1, beta 0, running mean 0, running var 1.
    pub fn set_passthrough(&self) {
        self.gamma.update_value(|g| g.fill(T::ONE));
        self.beta.update_value(|b| b.fill(T::ZERO));
        self.running_mean.update_value(|m| m.fill(T::ZERO));
        self.running_var.update_value(|v| v.fill(T::ONE));
    }
}

impl<T: Scalar> Module<T> for BatchNorm2d<T> {
    fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        ops::batch_norm2d(
            x,
            &self.gamma.tracked(),
            &self.beta.tracked(),
            &self.running_mean.value(),
            &self.running_var.value(),
            mode,
            self.eps,
            self.momentum,
        )
    }

    fn parameters(&self) -> Vec<Parameter<T>> {
        vec![
            self.gamma.clone(),
            self.beta.clone(),
            self.running_mean.clone(),
            self.running_var.clone(),
        ]
    }
}
