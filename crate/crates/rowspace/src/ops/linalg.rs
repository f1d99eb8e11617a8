//! Matrix products and layout-permuting views.

use crate::error::{Error, Result};
use crate::kernels;
use crate::scalar::Scalar;
use crate::tape::record_op;
use crate::tensor::Tensor;

/// Standard matrix product of a `[m×k]` and a `[k×n]` tensor.
///
/// Backward: dA = dC·Bᵀ, dB = Aᵀ·dC.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() != 2 || b.rank() != 2 {
        return Err(Error::Rank(format!(
            "matmul expects two rank-2 tensors, got {:?} and {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let (m, k) = (a.dims()[0], a.dims()[1]);
    let (k2, n) = (b.dims()[0], b.dims()[1]);
    if k != k2 {
        return Err(Error::shape(format!(
            "matmul inner extents differ: [{m}x{k}] vs [{k2}x{n}]"
        )));
    }
    let av = a.to_vec();
    let bv = b.to_vec();
    let cv = kernels::matmul(&av, &bv, m, k, n);
    let mut out = Tensor::from_vec(vec![m, n], cv)?;
    record_op(&mut out, &[a, b], move |gout, needs| {
        let ga = needs[0].then(|| kernels::matmul_nt(gout, &bv, m, n, k));
        let gb = needs[1].then(|| kernels::matmul_tn(&av, gout, k, m, n));
        vec![ga, gb]
    });
    Ok(out)
}

/// Batched matrix product: `[l×m×k] · [l×k×n] → [l×m×n]`.
pub fn bmm<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() != 3 || b.rank() != 3 {
        return Err(Error::Rank(format!(
            "bmm expects two rank-3 tensors, got {:?} and {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let (l, m, k) = (a.dims()[0], a.dims()[1], a.dims()[2]);
    let (l2, k2, n) = (b.dims()[0], b.dims()[1], b.dims()[2]);
    if l != l2 || k != k2 {
        return Err(Error::shape(format!(
            "bmm extents differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let av = a.to_vec();
    let bv = b.to_vec();
    let mut cv = Vec::with_capacity(l * m * n);
    for i in 0..l {
        cv.extend(kernels::matmul(
            &av[i * m * k..(i + 1) * m * k],
            &bv[i * k * n..(i + 1) * k * n],
            m,
            k,
            n,
        ));
    }
    let mut out = Tensor::from_vec(vec![l, m, n], cv)?;
    record_op(&mut out, &[a, b], move |gout, needs| {
        let ga = needs[0].then(|| {
            let mut g = Vec::with_capacity(l * m * k);
            for i in 0..l {
                g.extend(kernels::matmul_nt(
                    &gout[i * m * n..(i + 1) * m * n],
                    &bv[i * k * n..(i + 1) * k * n],
                    m,
                    n,
                    k,
                ));
            }
            g
        });
        let gb = needs[1].then(|| {
            let mut g = Vec::with_capacity(l * k * n);
            for i in 0..l {
                g.extend(kernels::matmul_tn(
                    &av[i * m * k..(i + 1) * m * k],
                    &gout[i * m * n..(i + 1) * m * n],
                    k,
                    m,
                    n,
                ));
            }
            g
        });
        vec![ga, gb]
    });
    Ok(out)
}

/// 2-d transpose as a storage-sharing view.
///
/// The result reads and writes the same buffer as `a`; gradients flow back
/// to `a`'s node (and through it to the parameter `a` came from), so using
/// a weight and its transpose in one graph accumulates both contributions
/// into a single gradient buffer.
pub fn transpose<T: Scalar>(a: &Tensor<T>) -> Result<Tensor<T>> {
    let mut out = a.transposed_view()?;
    let (rows, cols) = (a.dims()[0], a.dims()[1]);
    record_op(&mut out, &[a], move |gout, _needs| {
        // gout is row-major in the view dims [cols, rows]
        vec![Some(kernels::transpose2d(gout, cols, rows))]
    });
    Ok(out)
}
