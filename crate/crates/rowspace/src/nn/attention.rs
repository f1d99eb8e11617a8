//! Multi-head self-attention.

use crate::error::{Error, Result};
use crate::module::{Mode, Module};
use crate::ops;
use crate::param::{InitKind, Parameter};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Projection weights for one attention pass. Tensors, not parameters, so a
/// tied layer can pass transpose views of its two matrices and run the same
/// code as the four-matrix baseline.
pub struct MhaWeights<'a, T: Scalar> {
    pub w_q: &'a Tensor<T>,
    pub w_k: &'a Tensor<T>,
    pub w_v: &'a Tensor<T>,
    pub w_proj: &'a Tensor<T>,
    pub b_q: Option<&'a Tensor<T>>,
    pub b_k: Option<&'a Tensor<T>>,
    pub b_v: Option<&'a Tensor<T>>,
    pub b_proj: Option<&'a Tensor<T>>,
}

/// Scaled dot-product multi-head attention over `[B×T×d]`.
///
/// Per head i: softmax(QᵢKᵢᵀ/√(d/h))·Vᵢ; heads are split head-major from the
/// projection output, concatenated back and projected by `w_proj`.
pub fn mha_core<T: Scalar>(
    x: &Tensor<T>,
    w: &MhaWeights<'_, T>,
    heads: usize,
) -> Result<Tensor<T>> {
    if x.rank() != 3 {
        return Err(Error::Rank(format!(
            "attention expects [B,T,d], got {:?}",
            x.dims()
        )));
    }
    let (b, t, d) = (x.dims()[0], x.dims()[1], x.dims()[2]);
    if w.w_q.dims() != [d, d] || w.w_k.dims() != [d, d] || w.w_v.dims() != [d, d] || w.w_proj.dims() != [d, d]
    {
        return Err(Error::shape(format!(
            "attention weights must be [{d}x{d}] for input {:?}",
            x.dims()
        )));
    }
    if d % heads != 0 {
        return Err(Error::shape(format!(
            "model dim {d} not divisible by {heads} heads"
        )));
    }
    let dh = d / heads;

    let flat = ops::reshape(x, vec![b * t, d])?;
    let project = |wm: &Tensor<T>, bias: Option<&Tensor<T>>| -> Result<Tensor<T>> {
        let y = ops::matmul(&flat, &ops::transpose(wm)?)?;
        match bias {
            Some(bias) => ops::add_broadcast(&y, bias),
            None => Ok(y),
        }
    };
    let q = project(w.w_q, w.b_q)?;
    let k = project(w.w_k, w.b_k)?;
    let v = project(w.w_v, w.b_v)?;

    // [B·T, d] → [B·h, T, d/h], head-major split
    let split = |y: &Tensor<T>| -> Result<Tensor<T>> {
        let y = ops::reshape(y, vec![b, t, heads, dh])?;
        let y = ops::permute(&y, &[0, 2, 1, 3])?;
        ops::reshape(&y, vec![b * heads, t, dh])
    };
    let qh = split(&q)?;
    let kh = split(&k)?;
    let vh = split(&v)?;

    let scores = ops::bmm(&qh, &ops::permute(&kh, &[0, 2, 1])?)?;
    let scores = ops::scale(&scores, T::ONE / T::from_f64((dh as f64).sqrt()));
    let probs = ops::softmax_lastdim(&scores)?;
    let ctx = ops::bmm(&probs, &vh)?;

    let merged = ops::reshape(&ctx, vec![b, heads, t, dh])?;
    let merged = ops::permute(&merged, &[0, 2, 1, 3])?;
    let merged = ops::reshape(&merged, vec![b * t, d])?;

    let out = project_with(&merged, w.w_proj, w.b_proj)?;
    ops::reshape(&out, vec![b, t, d])
}

fn project_with<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let y = ops::matmul(x, &ops::transpose(w)?)?;
    match bias {
        Some(bias) => ops::add_broadcast(&y, bias),
        None => Ok(y),
    }
}

/// Conventional attention with four independent `[d×d]` projections
/// (4d² matrix parameters, +4d with biases).
pub struct MhaLayer<T: Scalar> {
    w_q: Parameter<T>,
    w_k: Parameter<T>,
    w_v: Parameter<T>,
    w_proj: Parameter<T>,
    b_q: Option<Parameter<T>>,
    b_k: Option<Parameter<T>>,
    b_v: Option<Parameter<T>>,
    b_proj: Option<Parameter<T>>,
    heads: usize,
}

impl<T: Scalar> MhaLayer<T> {
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
        Ok(MhaLayer {
            w_q: mat("w_q"),
            w_k: mat("w_k"),
            w_v: mat("w_v"),
            w_proj: mat("w_proj"),
            b_q: bias.then(|| vecp("b_q")),
            b_k: bias.then(|| vecp("b_k")),
            b_v: bias.then(|| vecp("b_v")),
            b_proj: bias.then(|| vecp("b_proj")),
            heads,
        })
    }

    /// Assembles a layer from explicit parameters (oracle tests build the
    /// untied twin of a tied layer this way).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        w_q: Parameter<T>,
        w_k: Parameter<T>,
        w_v: Parameter<T>,
        w_proj: Parameter<T>,
        b_q: Option<Parameter<T>>,
        b_k: Option<Parameter<T>>,
        b_v: Option<Parameter<T>>,
        b_proj: Option<Parameter<T>>,
        heads: usize,
    ) -> Self {
        MhaLayer {
            w_q,
            w_k,
            w_v,
            w_proj,
            b_q,
            b_k,
            b_v,
            b_proj,
            heads,
        }
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn w_q(&self) -> &Parameter<T> {
        &self.w_q
    }

    pub fn w_proj(&self) -> &Parameter<T> {
        &self.w_proj
    }
}

impl<T: Scalar> Module<T> for MhaLayer<T> {
    fn forward(&self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>> {
        let w_q = self.w_q.tracked();
        let w_k = self.w_k.tracked();
        let w_v = self.w_v.tracked();
        let w_proj = self.w_proj.tracked();
        let b_q = self.b_q.as_ref().map(|p| p.tracked());
        let b_k = self.b_k.as_ref().map(|p| p.tracked());
        let b_v = self.b_v.as_ref().map(|p| p.tracked());
        let b_proj = self.b_proj.as_ref().map(|p| p.tracked());
        mha_core(
            x,
            &MhaWeights {
                w_q: &w_q,
                w_k: &w_k,
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
        let mut ps = vec![
            self.w_q.clone(),
            self.w_k.clone(),
            self.w_v.clone(),
            self.w_proj.clone(),
        ];
        for b in [&self.b_q, &self.b_k, &self.b_v, &self.b_proj] {
            ps.extend(b.clone());
        }
        ps
    }
}
