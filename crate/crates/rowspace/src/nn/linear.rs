//! Affine layer `y = xWᵀ + b`.

use crate::error::{Error, Result};
use crate::module::{Mode, Module};
use crate::ops;
use crate::param::{InitKind, Parameter};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Applies `w: [out×in]` (and optional bias) to the last axis of `x`,
/// broadcasting over every leading axis.
pub fn linear_core<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    if w.rank() != 2 {
        return Err(Error::Rank(format!(
            "linear weight must be rank 2, got {:?}",
            w.dims()
        )));
    }
    let (out_dim, in_dim) = (w.dims()[0], w.dims()[1]);
    let xd = x.dims();
    if xd.last() != Some(&in_dim) {
        return Err(Error::shape(format!(
            "linear input {:?} does not end in weight in-extent {in_dim}",
            xd
        )));
    }
    let rows = x.numel() / in_dim;
    let flat = ops::reshape(x, vec![rows, in_dim])?;
    let mut y = ops::matmul(&flat, &ops::transpose(w)?)?;
    if let Some(b) = b {
        y = ops::add_broadcast(&y, b)?;
    }
    let mut out_dims = xd[..xd.len() - 1].to_vec();
    out_dims.push(out_dim);
    ops::reshape(&y, out_dims)
}

/// Dense layer with weight `[out×in]` and optional bias `[out]`.
pub struct LinearLayer<T: Scalar> {
    w: Parameter<T>,
    b: Option<Parameter<T>>,
}

impl<T: Scalar> LinearLayer<T> {
    pub fn new(prefix: &str, in_dim: usize, out_dim: usize, bias: bool) -> Self {
        LinearLayer {
            w: Parameter::new(
                format!("{prefix}.w"),
                vec![out_dim, in_dim],
                InitKind::TruncNormal { std: 0.02 },
            ),
            b: bias.then(|| Parameter::new(format!("{prefix}.b"), vec![out_dim], InitKind::Zeros)),
        }
    }

    pub fn from_parts(w: Parameter<T>, b: Option<Parameter<T>>) -> Result<Self> {
        if w.dims().len() != 2 {
            return Err(Error::Rank(format!(
                "linear weight must be rank 2, got {:?}",
                w.dims()
            )));
        }
        if let Some(b) = &b {
            if b.dims() != [w.dims()[0]] {
                return Err(Error::shape(format!(
                    "bias extent {:?} does not match out extent {}",
                    b.dims(),
                    w.dims()[0]
                )));
            }
        }
        Ok(LinearLayer { w, b })
    }

    pub fn weight(&self) -> &Parameter<T> {
        &self.w
    }

    pub fn bias(&self) -> Option<&Parameter<T>> {
        self.b.as_ref()
    }

    pub fn in_dim(&self) -> usize {
        self.w.dims()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.w.dims()[0]
    }
}

impl<T: Scalar> Module<T> for LinearLayer<T> {
    fn forward(&self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let w = self.w.tracked();
        let b = self.b.as_ref().map(|b| b.tracked());
        linear_core(x, &w, b.as_ref())
    }

    fn parameters(&self) -> Vec<Parameter<T>> {
        let mut ps = vec![self.w.clone()];
        ps.extend(self.b.clone());
        ps
    }
}
