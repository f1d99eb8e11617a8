//! Tied multi-head attention: Q = W_q·x, K = W_kv·x, V = W_kvᵀ·x, and the
//! output projection is W_qᵀ·x̂. Two matrices where the baseline keeps four;
//! biases stay untied.

use crate::error::{Error, Result};
use crate::module::{Mode, Module};
use crate::nn::{mha_core, MhaWeights};
use crate::ops;
use crate::param::{InitKind, Parameter};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub struct TiedMhaLayer<T: Scalar> {
    w_q: Parameter<T>,
    w_kv: Parameter<T>,
    b_q: Option<Parameter<T>>,
    b_k: Option<Parameter<T>>,
    b_v: Option<Parameter<T>>,
    b_proj: Option<Parameter<T>>,
    heads: usize,
}

impl<T: Scalar> TiedMhaLayer<T> {
    /// Tying needs square projections: `W_kvᵀ·x` must land back in dim `d`.
    pub fn new(prefix: &str, dim: usize, heads: usize, bias: bool) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::Build(format!(
                "attention dim {dim} not divisible by {heads} heads"
            )));
        }
        let mat = |suffix: &str| {
            Parameter::new(
                format!("{prefix}.{suffix}"),
                vec![dim, dim],
                InitKind::TruncNormal { std: 0.02 },
            )
        };
        let vecp =
            |suffix: &str| Parameter::new(format!("{prefix}.{suffix}"), vec![dim], InitKind::Zeros);
        Ok(TiedMhaLayer {
            w_q: mat("w_q"),
            w_kv: mat("w_kv"),
            b_q: bias.then(|| vecp("b_q")),
            b_k: bias.then(|| vecp("b_k")),
            b_v: bias.then(|| vecp("b_v")),
            b_proj: bias.then(|| vecp("b_proj")),
            heads,
        })
    }

    pub fn w_q(&self) -> &Parameter<T> {
        &self.w_q
    }

    pub fn w_kv(&self) -> &Parameter<T> {
        &self.w_kv
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    /// The projection role's matrix: a transpose view of `w_q`'s storage.
    pub fn projection_matrix(&self) -> Tensor<T> {
        self.w_q
            .value()
            .transposed_view()
            .expect("w_q is rank 2 by construction")
    }
}

impl<T: Scalar> Module<T> for TiedMhaLayer<T> {
    fn forward(&self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let w_q = self.w_q.tracked();
        let w_kv = self.w_kv.tracked();
        // second roles: same storage through tape-recorded transpose views
        let w_v = ops::transpose(&w_kv)?;
        let w_proj = ops::transpose(&w_q)?;
        let b_q = self.b_q.as_ref().map(|p| p.tracked());
        let b_k = self.b_k.as_ref().map(|p| p.tracked());
        let b_v = self.b_v.as_ref().map(|p| p.tracked());
        let b_proj = self.b_proj.as_ref().map(|p| p.tracked());
        mha_core(
            x,
            &MhaWeights {
                w_q: &w_q,
                w_k: &w_kv,
                w_v: &w_v,
                w_proj: &w_proj,
                b_q: b_q.as_ref(),
                b_k: b_k.as_ref(),
                b_v: b_v.as_ref(),
                b_proj: b_proj.as_ref(),
            },
            self.heads,
        )
    }

    fn parameters(&self) -> Vec<Parameter<T>> {
        let mut ps = vec![self.w_q.clone(), self.w_kv.clone()];
        for b in [&self.b_q, &self.b_k, &self.b_v, &self.b_proj] {
            ps.extend(b.clone());
        }
        ps
    }
}
