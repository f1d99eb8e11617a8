//! Tied feed-forward network: `y = Wᵀ·F(Wx + b₁) + b₂` with one stored
//! matrix instead of two.

use crate::error::{Error, Result};
use crate::module::{Mode, Module};
use crate::nn::ffn_core;
use crate::ops::{self, Activation};
use crate::param::{InitKind, Parameter};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub struct TiedFfnLayer<T: Scalar> {
    w: Parameter<T>,
    b1: Parameter<T>,
    b2: Parameter<T>,
    activation: Activation,
}

impl<T: Scalar> TiedFfnLayer<T> {
    pub fn new(prefix: &str, dim: usize, hidden: usize, activation: Activation) -> Self {
        TiedFfnLayer {
            w: Parameter::new(
                format!("{prefix}.w"),
                vec![hidden, dim],
                InitKind::TruncNormal { std: 0.02 },
            ),
            b1: Parameter::new(format!("{prefix}.b1"), vec![hidden], InitKind::Zeros),
            b2: Parameter::new(format!("{prefix}.b2"), vec![dim], InitKind::Zeros),
            activation,
        }
    }

    pub fn from_parts(
        w: Parameter<T>,
        b1: Parameter<T>,
        b2: Parameter<T>,
        activation: Activation,
    ) -> Result<Self> {
        if w.dims().len() != 2 {
            return Err(Error::Rank(format!(
                "tied ffn weight must be rank 2, got {:?}",
                w.dims()
            )));
        }
        Ok(TiedFfnLayer {
            w,
            b1,
            b2,
            activation,
        })
    }

    pub fn w(&self) -> &Parameter<T> {
        &self.w
    }

    /// The second application's matrix: a transpose view of `w`'s storage.
    pub fn second_matrix(&self) -> Tensor<T> {
        self.w
            .value()
            .transposed_view()
            .expect("w is rank 2 by construction")
    }
}

impl<T: Scalar> Module<T> for TiedFfnLayer<T> {
    fn forward(&self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let w = self.w.tracked();
        let wt = ops::transpose(&w)?;
        ffn_core(
            x,
            &w,
            Some(&self.b1.tracked()),
            &wt,
            Some(&self.b2.tracked()),
            self.activation,
        )
    }

    fn parameters(&self) -> Vec<Parameter<T>> {
        vec![self.w.clone(), self.b1.clone(), self.b2.clone()]
    }
}
