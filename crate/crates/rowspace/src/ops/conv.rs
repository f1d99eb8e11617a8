//! Convolution and pooling.

use crate::error::{Error, Result};
use crate::kernels;
use crate::scalar::Scalar;
use crate::tape::record_op;
use crate::tensor::Tensor;

/// Direct cross-correlation (no kernel flip).
///
/// `x`: `[N×C_in×H×W]`, `w`: `[C_out×C_in×kh×kw]`. The output extent
/// `(H + 2·padding − kh) / stride + 1` must be a positive integer.
pub fn conv2d<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    if x.rank() != 4 || w.rank() != 4 {
        return Err(Error::Rank(format!(
            "conv2d expects rank-4 input and kernel, got {:?} and {:?}",
            x.dims(),
            w.dims()
        )));
    }
    if stride == 0 {
        return Err(Error::Contract("conv2d stride must be ≥ 1".into()));
    }
    let (n, c_in, h, wid) = (x.dims()[0], x.dims()[1], x.dims()[2], x.dims()[3]);
    let (c_out, c_in2, kh, kw) = (w.dims()[0], w.dims()[1], w.dims()[2], w.dims()[3]);
    if c_in != c_in2 {
        return Err(Error::shape(format!(
            "conv2d channel mismatch: input has {c_in}, kernel expects {c_in2}"
        )));
    }
    let oh = kernels::conv_out_extent(h, kh, stride, padding).ok_or_else(|| {
        Error::shape(format!(
            "conv2d output height not integral: (H={h} + 2·{padding} − {kh}) / {stride} + 1"
        ))
    })?;
    let ow = kernels::conv_out_extent(wid, kw, stride, padding).ok_or_else(|| {
        Error::shape(format!(
            "conv2d output width not integral: (W={wid} + 2·{padding} − {kw}) / {stride} + 1"
        ))
    })?;

    let xv = x.to_vec();
    let wv = w.to_vec();
    let data = kernels::conv2d_forward(
        &xv, &wv, n, c_in, h, wid, c_out, kh, kw, stride, padding, oh, ow,
    );
    let mut out = Tensor::from_vec(vec![n, c_out, oh, ow], data)?;
    record_op(&mut out, &[x, w], move |gout, needs| {
        let (gx, gw) = kernels::conv2d_backward(
            &xv, &wv, gout, n, c_in, h, wid, c_out, kh, kw, stride, padding, oh, ow, needs[0],
            needs[1],
        );
        vec![gx, gw]
    });
    Ok(out)
}

/// Square-window max pooling. Backward routes each gradient to the first
/// maximum within its window (fixed scan order).
pub fn maxpool2d<T: Scalar>(
    x: &Tensor<T>,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    if x.rank() != 4 {
        return Err(Error::Rank(format!(
            "maxpool2d expects [N,C,H,W], got {:?}",
            x.dims()
        )));
    }
    let (n, c, h, w) = (x.dims()[0], x.dims()[1], x.dims()[2], x.dims()[3]);
    let oh = kernels::conv_out_extent(h, kernel, stride, padding)
        .ok_or_else(|| Error::shape(format!("maxpool2d output height not integral for H={h}")))?;
    let ow = kernels::conv_out_extent(w, kernel, stride, padding)
        .ok_or_else(|| Error::shape(format!("maxpool2d output width not integral for W={w}")))?;
    let xv = x.to_vec();
    let (data, argmax) = kernels::maxpool2d_forward(&xv, n, c, h, w, kernel, stride, padding, oh, ow);
    let numel_in = xv.len();
    let mut out = Tensor::from_vec(vec![n, c, oh, ow], data)?;
    record_op(&mut out, &[x], move |gout, _| {
        let mut gx = vec![T::ZERO; numel_in];
        for (&g, &off) in gout.iter().zip(argmax.iter()) {
            gx[off] += g;
        }
        vec![Some(gx)]
    });
    Ok(out)
}

/// Global average pooling: `[N×C×H×W] → [N×C]`.
pub fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.rank() != 4 {
        return Err(Error::Rank(format!(
            "global_avg_pool expects [N,C,H,W], got {:?}",
            x.dims()
        )));
    }
    let (n, c, h, w) = (x.dims()[0], x.dims()[1], x.dims()[2], x.dims()[3]);
    let plane = h * w;
    let inv = T::ONE / T::from_f64(plane as f64);
    let xv = x.to_vec();
    let mut data = Vec::with_capacity(n * c);
    for chunk in xv.chunks_exact(plane) {
        let mut s = T::ZERO;
        for &v in chunk {
            s += v;
        }
        data.push(s * inv);
    }
    let mut out = Tensor::from_vec(vec![n, c], data)?;
    record_op(&mut out, &[x], move |gout, _| {
        let mut gx = Vec::with_capacity(n * c * plane);
        for &g in gout {
            let spread = g * inv;
            gx.extend(std::iter::repeat(spread).take(plane));
        }
        vec![Some(gx)]
    });
    Ok(out)
}
