//! Layout ops: reshape, permute, narrow, token concat/select, broadcast.

use crate::error::{Error, Result};
use crate::kernels;
use crate::scalar::Scalar;
use crate::tape::record_op;
use crate::tensor::Tensor;

/// Reshape to `dims`. Contiguous inputs become views; strided inputs are
/// gathered into a fresh buffer. Backward is the identity on flat gradients.
pub fn reshape<T: Scalar>(a: &Tensor<T>, dims: impl Into<Vec<usize>>) -> Result<Tensor<T>> {
    let dims = dims.into();
    let numel: usize = dims.iter().product();
    if numel != a.numel() || dims.iter().any(|&d| d == 0) {
        return Err(Error::shape(format!(
            "reshape {:?} -> {:?} changes element count",
            a.dims(),
            dims
        )));
    }
    let mut out = match a.reshaped_view(dims.clone()) {
        Some(v) => v,
        None => Tensor::from_vec(dims, a.to_vec())?,
    };
    record_op(&mut out, &[a], move |gout, _| vec![Some(gout.to_vec())]);
    Ok(out)
}

/// Axis permutation as a storage-sharing view.
pub fn permute<T: Scalar>(a: &Tensor<T>, axes: &[usize]) -> Result<Tensor<T>> {
    let mut out = a.permuted_view(axes)?;
    let out_dims = out.dims().to_vec();
    let inv = kernels::inverse_axes(axes);
    record_op(&mut out, &[a], move |gout, _| {
        vec![Some(kernels::permute(gout, &out_dims, &inv))]
    });
    Ok(out)
}

/// Leading `len` entries along `axis`, as a storage-sharing view.
/// Backward scatters into the leading region and zero-fills the rest.
pub fn narrow<T: Scalar>(a: &Tensor<T>, axis: usize, len: usize) -> Result<Tensor<T>> {
    let mut out = a.narrowed_view(axis, len)?;
    let in_dims = a.dims().to_vec();
    let out_dims = out.dims().to_vec();
    record_op(&mut out, &[a], move |gout, _| {
        let mut gin = vec![T::ZERO; in_dims.iter().product()];
        let outer: usize = out_dims[..axis].iter().product();
        let inner: usize = out_dims[axis + 1..].iter().product();
        let in_axis = in_dims[axis];
        for o in 0..outer {
            for j in 0..len {
                let src = (o * len + j) * inner;
                let dst = (o * in_axis + j) * inner;
                gin[dst..dst + inner].copy_from_slice(&gout[src..src + inner]);
            }
        }
        vec![Some(gin)]
    });
    Ok(out)
}

/// Repeats `a` along a new leading axis: `[dims…] → [n, dims…]`.
/// Backward sums the gradient over the new axis.
pub fn expand_leading<T: Scalar>(a: &Tensor<T>, n: usize) -> Tensor<T> {
    let av = a.to_vec();
    let numel = av.len();
    let mut dims = vec![n];
    dims.extend_from_slice(a.dims());
    let mut data = Vec::with_capacity(n * numel);
    for _ in 0..n {
        data.extend_from_slice(&av);
    }
    let mut out = Tensor::from_vec(dims, data).expect("expand: consistent");
    record_op(&mut out, &[a], move |gout, _| {
        let mut g = vec![T::ZERO; numel];
        for chunk in gout.chunks_exact(numel) {
            for (gi, ci) in g.iter_mut().zip(chunk.iter()) {
                *gi += *ci;
            }
        }
        vec![Some(g)]
    });
    out
}

/// Concatenates two `[B×T×D]` tensors along the token axis.
pub fn concat_tokens<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() != 3 || b.rank() != 3 {
        return Err(Error::Rank(format!(
            "concat_tokens expects rank-3 tensors, got {:?} and {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let (ba, ta, da) = (a.dims()[0], a.dims()[1], a.dims()[2]);
    let (bb, tb, db) = (b.dims()[0], b.dims()[1], b.dims()[2]);
    if ba != bb || da != db {
        return Err(Error::shape(format!(
            "concat_tokens batch/feature extents differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let av = a.to_vec();
    let bv = b.to_vec();
    let mut data = Vec::with_capacity(ba * (ta + tb) * da);
    for i in 0..ba {
        data.extend_from_slice(&av[i * ta * da..(i + 1) * ta * da]);
        data.extend_from_slice(&bv[i * tb * da..(i + 1) * tb * da]);
    }
    let mut out = Tensor::from_vec(vec![ba, ta + tb, da], data)?;
    record_op(&mut out, &[a, b], move |gout, needs| {
        let row = (ta + tb) * da;
        let ga = needs[0].then(|| {
            let mut g = Vec::with_capacity(ba * ta * da);
            for i in 0..ba {
                g.extend_from_slice(&gout[i * row..i * row + ta * da]);
            }
            g
        });
        let gb = needs[1].then(|| {
            let mut g = Vec::with_capacity(ba * tb * da);
            for i in 0..ba {
                g.extend_from_slice(&gout[i * row + ta * da..(i + 1) * row]);
            }
            g
        });
        vec![ga, gb]
    });
    Ok(out)
}

/// Selects token `index` from a `[B×T×D]` tensor, yielding `[B×D]`.
pub fn token_at<T: Scalar>(x: &Tensor<T>, index: usize) -> Result<Tensor<T>> {
    if x.rank() != 3 {
        return Err(Error::Rank(format!(
            "token_at expects a rank-3 tensor, got {:?}",
            x.dims()
        )));
    }
    let (b, t, d) = (x.dims()[0], x.dims()[1], x.dims()[2]);
    if index >= t {
        return Err(Error::Index(format!(
            "token index {index} out of range for {t} tokens"
        )));
    }
    let xv = x.to_vec();
    let mut data = Vec::with_capacity(b * d);
    for i in 0..b {
        data.extend_from_slice(&xv[(i * t + index) * d..(i * t + index + 1) * d]);
    }
    let mut out = Tensor::from_vec(vec![b, d], data)?;
    record_op(&mut out, &[x], move |gout, _| {
        let mut g = vec![T::ZERO; b * t * d];
        for i in 0..b {
            g[(i * t + index) * d..(i * t + index + 1) * d]
                .copy_from_slice(&gout[i * d..(i + 1) * d]);
        }
        vec![Some(g)]
    });
    Ok(out)
}
