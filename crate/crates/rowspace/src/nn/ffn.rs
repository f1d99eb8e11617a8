//! Position-wise feed-forward network: `y = W₂·F(W₁x + b₁) + b₂`.

use crate::error::{Error, Result};
use crate::module::{Mode, Module};
use crate::nn::linear::linear_core;
use crate::ops::Activation;
use crate::param::{InitKind, Parameter};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Two affine maps around a nonlinearity. `w1: [f×d]`, `w2: [d×f]`.
pub fn ffn_core<T: Scalar>(
    x: &Tensor<T>,
    w1: &Tensor<T>,
    b1: Option<&Tensor<T>>,
    w2: &Tensor<T>,
    b2: Option<&Tensor<T>>,
    activation: Activation,
) -> Result<Tensor<T>> {
    let hidden = linear_core(x, w1, b1)?;
    let hidden = activation.apply(&hidden);
    linear_core(&hidden, w2, b2)
}

/// Conventional FFN holding two independent matrices of transposed shapes.
pub struct FfnLayer<T: Scalar> {
    w1: Parameter<T>,
    w2: Parameter<T>,
    b1: Parameter<T>,
    b2: Parameter<T>,
    activation: Activation,
}

impl<T: Scalar> FfnLayer<T> {
    pub fn new(prefix: &str, dim: usize, hidden: usize, activation: Activation) -> Self {
        FfnLayer {
            w1: Parameter::new(
                format!("{prefix}.w1"),
                vec![hidden, dim],
                InitKind::TruncNormal { std: 0.02 },
            ),
            w2: Parameter::new(
                format!("{prefix}.w2"),
                vec![dim, hidden],
                InitKind::TruncNormal { std: 0.02 },
            ),
            b1: Parameter::new(format!("{prefix}.b1"), vec![hidden], InitKind::Zeros),
            b2: Parameter::new(format!("{prefix}.b2"), vec![dim], InitKind::Zeros),
            activation,
        }
    }

    pub fn from_parts(
        w1: Parameter<T>,
        w2: Parameter<T>,
        b1: Parameter<T>,
        b2: Parameter<T>,
        activation: Activation,
    ) -> Result<Self> {
        let (f, d) = (w1.dims()[0], w1.dims()[1]);
        if w2.dims() != [d, f] {
            return Err(Error::shape(format!(
                "ffn w2 dims {:?} are not the transpose shape of w1 {:?}",
                w2.dims(),
                w1.dims()
            )));
        }
        Ok(FfnLayer {
            w1,
            w2,
            b1,
            b2,
            activation,
        })
    }

    pub fn w1(&self) -> &Parameter<T> {
        &self.w1
    }

    pub fn w2(&self) -> &Parameter<T> {
        &self.w2
    }
}

impl<T: Scalar> Module<T> for FfnLayer<T> {
    fn forward(&self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        ffn_core(
            x,
            &self.w1.tracked(),
            Some(&self.b1.tracked()),
            &self.w2.tracked(),
            Some(&self.b2.tracked()),
            self.activation,
        )
    }

    fn parameters(&self) -> Vec<Parameter<T>> {
        vec![
            self.w1.clone(),
            self.w2.clone(),
            self.b1.clone(),
            self.b2.clone(),
        ]
    }
}
