//! Softmax and normalization ops.

use crate::error::{Error, Result};
use crate::module::Mode;
use crate::scalar::Scalar;
use crate::tape::record_op;
use crate::tensor::Tensor;

/// Softmax over the last axis, computed with max-subtraction for stability.
/// Each last-axis slice of the output sums to 1.
pub fn softmax_lastdim<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let dims = x.dims().to_vec();
    let d = *dims.last().ok_or_else(|| {
        Error::Rank("softmax_lastdim expects at least one axis".into())
    })?;
    let xv = x.to_vec();
    let mut yv = Vec::with_capacity(xv.len());
    for row in xv.chunks_exact(d) {
        let mut m = row[0];
        for &v in row {
            m = m.maximum(v);
        }
        let mut sum = T::ZERO;
        let start = yv.len();
        for &v in row {
            let e = (v - m).exp();
            yv.push(e);
            sum += e;
        }
        for v in &mut yv[start..] {
            *v /= sum;
        }
    }
    if yv.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "softmax produced a non-finite value".into(),
        ));
    }
    let mut out = Tensor::from_vec(dims, yv.clone())?;
    record_op(&mut out, &[x], move |gout, _| {
        // dx = y ⊙ (g − Σ g·y) per slice
        let mut gx = Vec::with_capacity(gout.len());
        for (grow, yrow) in gout.chunks_exact(d).zip(yv.chunks_exact(d)) {
            let mut dot = T::ZERO;
            for (&g, &y) in grow.iter().zip(yrow.iter()) {
                dot += g * y;
            }
            for (&g, &y) in grow.iter().zip(yrow.iter()) {
                gx.push(y * (g - dot));
            }
        }
        vec![Some(gx)]
    });
    Ok(out)
}

/// Layer normalization over the last axis followed by a learned affine map.
pub fn layer_norm<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    let dims = x.dims().to_vec();
    let d = *dims
        .last()
        .ok_or_else(|| Error::Rank("layer_norm expects at least one axis".into()))?;
    if gamma.dims() != [d] || beta.dims() != [d] {
        return Err(Error::shape(format!(
            "layer_norm affine extents {:?}/{:?} do not match last axis {d}",
            gamma.dims(),
            beta.dims()
        )));
    }
    let xv = x.to_vec();
    let gv = gamma.to_vec();
    let bv = beta.to_vec();
    let eps = T::from_f64(eps);
    let inv_d = T::ONE / T::from_f64(d as f64);

    let slices = xv.len() / d;
    let mut xhat = Vec::with_capacity(xv.len());
    let mut inv_std = Vec::with_capacity(slices);
    let mut yv = Vec::with_capacity(xv.len());
    for row in xv.chunks_exact(d) {
        let mut mean = T::ZERO;
        for &v in row {
            mean += v;
        }
        mean *= inv_d;
        let mut var = T::ZERO;
        for &v in row {
            let c = v - mean;
            var += c * c;
        }
        var *= inv_d;
        let istd = T::ONE / (var + eps).sqrt();
        inv_std.push(istd);
        for (j, &v) in row.iter().enumerate() {
            let h = (v - mean) * istd;
            xhat.push(h);
            yv.push(gv[j] * h + bv[j]);
        }
    }
    let mut out = Tensor::from_vec(dims, yv)?;
    record_op(&mut out, &[x, gamma, beta], move |gout, needs| {
        let gx = needs[0].then(|| {
            let mut gx = Vec::with_capacity(gout.len());
            for (s, (grow, hrow)) in gout.chunks_exact(d).zip(xhat.chunks_exact(d)).enumerate() {
                // a = γ ⊙ g; dx = (a − mean(a) − x̂·mean(a ⊙ x̂)) / std
                let mut mean_a = T::ZERO;
                let mut mean_ah = T::ZERO;
                for j in 0..d {
                    let a = gv[j] * grow[j];
                    mean_a += a;
                    mean_ah += a * hrow[j];
                }
                mean_a *= inv_d;
                mean_ah *= inv_d;
                for j in 0..d {
                    let a = gv[j] * grow[j];
                    gx.push((a - mean_a - hrow[j] * mean_ah) * inv_std[s]);
                }
            }
            gx
        });
        let ggamma = needs[1].then(|| {
            let mut gg = vec![T::ZERO; d];
            for (grow, hrow) in gout.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                for j in 0..d {
                    gg[j] += grow[j] * hrow[j];
                }
            }
            gg
        });
        let gbeta = needs[2].then(|| {
            let mut gb = vec![T::ZERO; d];
            for grow in gout.chunks_exact(d) {
                for j in 0..d {
                    gb[j] += grow[j];
                }
            }
            gb
        });
        vec![gx, ggamma, gbeta]
    });
    Ok(out)
}

/// 2-d batch normalization over `[N×C×H×W]`.
///
/// Train mode normalizes with batch statistics and updates the running
/// buffers in place by exponential moving average (unbiased variance, torch
/// convention); eval mode reads the running buffers and leaves them alone.
#[allow(clippy::too_many_arguments)]
pub fn batch_norm2d<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    mode: Mode,
    eps: f64,
    momentum: f64,
) -> Result<Tensor<T>> {
    if x.rank() != 4 {
        return Err(Error::Rank(format!(
            "batch_norm2d expects [N,C,H,W], got {:?}",
            x.dims()
        )));
    }
    let (n, c, h, w) = (x.dims()[0], x.dims()[1], x.dims()[2], x.dims()[3]);
    if gamma.dims() != [c] || beta.dims() != [c] || running_mean.dims() != [c] || running_var.dims() != [c]
    {
        return Err(Error::shape(format!(
            "batch_norm2d per-channel extents must be [{c}]"
        )));
    }
    let xv = x.to_vec();
    let gv = gamma.to_vec();
    let bv = beta.to_vec();
    let eps_t = T::from_f64(eps);
    let plane = h * w;
    let m = n * plane;

    let (mean, var) = match mode {
        Mode::Train => {
            let inv_m = T::ONE / T::from_f64(m as f64);
            let mut mean = vec![T::ZERO; c];
            let mut var = vec![T::ZERO; c];
            for ch in 0..c {
                let mut s = T::ZERO;
                for img in 0..n {
                    let base = (img * c + ch) * plane;
                    for &v in &xv[base..base + plane] {
                        s += v;
                    }
                }
                let mu = s * inv_m;
                let mut q = T::ZERO;
                for img in 0..n {
                    let base = (img * c + ch) * plane;
                    for &v in &xv[base..base + plane] {
                        let d = v - mu;
                        q += d * d;
                    }
                }
                mean[ch] = mu;
                var[ch] = q * inv_m;
            }
            // EMA update of running stats (side effect, not on the tape)
            let mom = T::from_f64(momentum);
            let keep = T::ONE - mom;
            let unbias = if m > 1 {
                T::from_f64(m as f64 / (m as f64 - 1.0))
            } else {
                T::ONE
            };
            running_mean.with_storage_mut(|r| {
                for (r, &mu) in r.iter_mut().zip(mean.iter()) {
                    *r = keep * *r + mom * mu;
                }
            });
            running_var.with_storage_mut(|r| {
                for (r, &v) in r.iter_mut().zip(var.iter()) {
                    *r = keep * *r + mom * v * unbias;
                }
            });
            (mean, var)
        }
        Mode::Eval => (running_mean.to_vec(), running_var.to_vec()),
    };

    let inv_std: Vec<T> = var.iter().map(|&v| T::ONE / (v + eps_t).sqrt()).collect();
    let mut yv = Vec::with_capacity(xv.len());
    let mut xhat = Vec::with_capacity(xv.len());
    for img in 0..n {
        for ch in 0..c {
            let base = (img * c + ch) * plane;
            for &v in &xv[base..base + plane] {
                let hval = (v - mean[ch]) * inv_std[ch];
                xhat.push(hval);
                yv.push(gv[ch] * hval + bv[ch]);
            }
        }
    }
    let mut out = Tensor::from_vec(x.dims().to_vec(), yv)?;
    let batch_stats = mode == Mode::Train;
    record_op(&mut out, &[x, gamma, beta], move |gout, needs| {
        let mut sum_g = vec![T::ZERO; c];
        let mut sum_gh = vec![T::ZERO; c];
        for img in 0..n {
            for ch in 0..c {
                let base = (img * c + ch) * plane;
                for (&g, &hv) in gout[base..base + plane].iter().zip(&xhat[base..base + plane]) {
                    sum_g[ch] += g;
                    sum_gh[ch] += g * hv;
                }
            }
        }
        let gx = needs[0].then(|| {
            let inv_m = T::ONE / T::from_f64(m as f64);
            let mut gx = Vec::with_capacity(gout.len());
            for img in 0..n {
                for ch in 0..c {
                    let base = (img * c + ch) * plane;
                    let scale = gv[ch] * inv_std[ch];
                    for (&g, &hv) in
                        gout[base..base + plane].iter().zip(&xhat[base..base + plane])
                    {
                        if batch_stats {
                            gx.push(scale * (g - sum_g[ch] * inv_m - hv * (sum_gh[ch] * inv_m)));
                        } else {
                            gx.push(scale * g);
                        }
                    }
                }
            }
            gx
        });
        let ggamma = needs[1].then(|| sum_gh.clone());
        let gbeta = needs[2].then(|| sum_g.clone());
        vec![gx, ggamma, gbeta]
    });
    Ok(out)
}
