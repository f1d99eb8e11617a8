//! Elementwise arithmetic and activations.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::record_op;
use crate::tensor::Tensor;

/// Elementwise sum of two same-shape tensors.
pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.dims() != b.dims() {
        return Err(Error::shape(format!(
            "add extents differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let av = a.to_vec();
    let bv = b.to_vec();
    let data: Vec<T> = av.iter().zip(bv.iter()).map(|(&x, &y)| x + y).collect();
    let mut out = Tensor::from_vec(a.dims().to_vec(), data)?;
    record_op(&mut out, &[a, b], move |gout, needs| {
        vec![
            needs[0].then(|| gout.to_vec()),
            needs[1].then(|| gout.to_vec()),
        ]
    });
    Ok(out)
}

/// Adds `b` to `a`, broadcasting `b` over `a`'s leading axes. `b.dims()`
/// must be a suffix of `a.dims()` (covers bias rows and positional tables).
/// Backward for `b` sums the gradient over the broadcast axes.
pub fn add_broadcast<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let ad = a.dims();
    let bd = b.dims();
    if bd.len() > ad.len() || &ad[ad.len() - bd.len()..] != bd {
        return Err(Error::shape(format!(
            "add_broadcast: {bd:?} is not a suffix of {ad:?}"
        )));
    }
    let av = a.to_vec();
    let bv = b.to_vec();
    let block = bv.len();
    let mut data = Vec::with_capacity(av.len());
    for chunk in av.chunks_exact(block) {
        for (x, y) in chunk.iter().zip(bv.iter()) {
            data.push(*x + *y);
        }
    }
    let mut out = Tensor::from_vec(ad.to_vec(), data)?;
    record_op(&mut out, &[a, b], move |gout, needs| {
        let ga = needs[0].then(|| gout.to_vec());
        let gb = needs[1].then(|| {
            let mut g = vec![T::ZERO; block];
            for chunk in gout.chunks_exact(block) {
                for (gi, ci) in g.iter_mut().zip(chunk.iter()) {
                    *gi += *ci;
                }
            }
            g
        });
        vec![ga, gb]
    });
    Ok(out)
}

/// Elementwise product of two same-shape tensors.
pub fn mul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.dims() != b.dims() {
        return Err(Error::shape(format!(
            "mul extents differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let av = a.to_vec();
    let bv = b.to_vec();
    let data: Vec<T> = av.iter().zip(bv.iter()).map(|(&x, &y)| x * y).collect();
    let mut out = Tensor::from_vec(a.dims().to_vec(), data)?;
    record_op(&mut out, &[a, b], move |gout, needs| {
        let ga = needs[0].then(|| {
            gout.iter()
                .zip(bv.iter())
                .map(|(&g, &y)| g * y)
                .collect::<Vec<_>>()
        });
        let gb = needs[1].then(|| {
            gout.iter()
                .zip(av.iter())
                .map(|(&g, &x)| g * x)
                .collect::<Vec<_>>()
        });
        vec![ga, gb]
    });
    Ok(out)
}

/// Multiplies every element by a constant.
pub fn scale<T: Scalar>(a: &Tensor<T>, c: T) -> Tensor<T> {
    let data: Vec<T> = a.to_vec().into_iter().map(|x| x * c).collect();
    let mut out = Tensor::from_vec(a.dims().to_vec(), data).expect("scale: shape preserved");
    record_op(&mut out, &[a], move |gout, _| {
        vec![Some(gout.iter().map(|&g| g * c).collect())]
    });
    out
}

pub fn relu<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let av = a.to_vec();
    let data: Vec<T> = av.iter().map(|&x| x.maximum(T::ZERO)).collect();
    let mut out = Tensor::from_vec(a.dims().to_vec(), data).expect("relu: shape preserved");
    record_op(&mut out, &[a], move |gout, _| {
        vec![Some(
            gout.iter()
                .zip(av.iter())
                .map(|(&g, &x)| if x > T::ZERO { g } else { T::ZERO })
                .collect(),
        )]
    });
    out
}

/// Exact-erf GELU: `x/2 · (1 + erf(x/√2))`.
pub fn gelu<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let av = a.to_vec();
    let half = T::from_f64(0.5);
    let inv_sqrt2 = T::from_f64(std::f64::consts::FRAC_1_SQRT_2);
    let data: Vec<T> = av
        .iter()
        .map(|&x| x * half * (T::ONE + (x * inv_sqrt2).erf()))
        .collect();
    let mut out = Tensor::from_vec(a.dims().to_vec(), data).expect("gelu: shape preserved");
    record_op(&mut out, &[a], move |gout, _| {
        // d/dx = Φ(x) + x·φ(x) with Φ the normal cdf and φ its density
        let inv_sqrt_2pi = T::from_f64(1.0 / (2.0 * std::f64::consts::PI).sqrt());
        vec![Some(
            gout.iter()
                .zip(av.iter())
                .map(|(&g, &x)| {
                    let cdf = half * (T::ONE + (x * inv_sqrt2).erf());
                    let pdf = inv_sqrt_2pi * (-(x * x) * half).exp();
                    g * (cdf + x * pdf)
                })
                .collect(),
        )]
    });
    out
}

/// Fixed-weight contraction to a scalar: `Σ wᵢ·xᵢ` (weights are constants).
pub fn weighted_sum<T: Scalar>(x: &Tensor<T>, weights: &[T]) -> Result<Tensor<T>> {
    if weights.len() != x.numel() {
        return Err(Error::shape(format!(
            "weighted_sum: {} weights for {} elements",
            weights.len(),
            x.numel()
        )));
    }
    let xv = x.to_vec();
    let mut acc = T::ZERO;
    for (v, w) in xv.iter().zip(weights.iter()) {
        acc += *v * *w;
    }
    let mut out = Tensor::scalar(acc);
    let w = weights.to_vec();
    record_op(&mut out, &[x], move |gout, _| {
        let g = gout[0];
        vec![Some(w.iter().map(|&wi| wi * g).collect())]
    });
    Ok(out)
}

/// Sum of all elements as a scalar tensor.
pub fn sum_all<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let xv = x.to_vec();
    let mut acc = T::ZERO;
    for v in &xv {
        acc += *v;
    }
    let mut out = Tensor::scalar(acc);
    let n = xv.len();
    record_op(&mut out, &[x], move |gout, _| {
        vec![Some(vec![gout[0]; n])]
    });
    out
}
