//! Raw numeric loops shared by forward ops and backward rules.
//!
//! All kernels accumulate in a fixed index order so replaying a forward pass
//! with identical inputs is bitwise deterministic.

use crate::scalar::Scalar;

/// c[m,n] = a[m,k] · b[k,n]; accumulation over k in ascending order.
pub(crate) fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::ZERO; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (p, &apv) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow.iter()) {
                *cv += apv * bv;
            }
        }
    }
    c
}

/// c[m,k] = g[m,n] · b[k,n]ᵀ (i.e. g · bᵀ).
pub(crate) fn matmul_nt<T: Scalar>(g: &[T], b: &[T], m: usize, n: usize, k: usize) -> Vec<T> {
    let mut c = vec![T::ZERO; m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut acc = T::ZERO;
            for (gv, bv) in grow.iter().zip(brow.iter()) {
                acc += *gv * *bv;
            }
            c[i * k + p] = acc;
        }
    }
    c
}

/// c[k,n] = a[m,k]ᵀ · g[m,n].
pub(crate) fn matmul_tn<T: Scalar>(a: &[T], g: &[T], k: usize, m: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::ZERO; k * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let grow = &g[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, &gv) in crow.iter_mut().zip(grow.iter()) {
                *cv += av * gv;
            }
        }
    }
    c
}

pub(crate) fn transpose2d<T: Scalar>(x: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::ZERO; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = x[i * cols + j];
        }
    }
    out
}

/// Gathers `data` (row-major in `dims`) into row-major order of the permuted
/// dims, i.e. out[idx] = data[idx ∘ axes].
pub(crate) fn permute<T: Scalar>(data: &[T], dims: &[usize], axes: &[usize]) -> Vec<T> {
    let rank = dims.len();
    let mut in_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * dims[i + 1];
    }
    let out_dims: Vec<usize> = axes.iter().map(|&a| dims[a]).collect();
    let gather_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let numel: usize = dims.iter().product();
    let mut out = Vec::with_capacity(numel);
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for _ in 0..numel {
        out.push(data[off]);
        for axis in (0..rank).rev() {
            idx[axis] += 1;
            off += gather_strides[axis];
            if idx[axis] < out_dims[axis] {
                break;
            }
            off -= gather_strides[axis] * out_dims[axis];
            idx[axis] = 0;
        }
    }
    out
}

pub(crate) fn inverse_axes(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0usize; axes.len()];
    for (i, &a) in axes.iter().enumerate() {
        inv[a] = i;
    }
    inv
}

/// Output spatial extent of a convolution/pool, `None` when not integral.
pub(crate) fn conv_out_extent(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Option<usize> {
    let span = input + 2 * padding;
    if span < kernel {
        return None;
    }
    let run = span - kernel;
    if run % stride != 0 {
        return None;
    }
    Some(run / stride + 1)
}

/// Direct cross-correlation (no kernel flip).
/// x: [n, c_in, h, w], w: [c_out, c_in, kh, kw] → [n, c_out, oh, ow].
/// Accumulation order per output element: c_in, then kh, then kw ascending.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_forward<T: Scalar>(
    x: &[T],
    w: &[T],
    n: usize,
    c_in: usize,
    h: usize,
    wid: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
) -> Vec<T> {
    // im2col per image, then a matmul; the flattened reduction index
    // (ci, ki, kj) ascends exactly like the direct 6-loop summation.
    let kdim = c_in * kh * kw;
    let mut out = vec![T::ZERO; n * c_out * oh * ow];
    let mut col = vec![T::ZERO; kdim * oh * ow];
    for img in 0..n {
        let xbase = img * c_in * h * wid;
        for ci in 0..c_in {
            for ki in 0..kh {
                for kj in 0..kw {
                    let krow = (ci * kh + ki) * kw + kj;
                    for oy in 0..oh {
                        let iy = (oy * stride + ki) as isize - padding as isize;
                        for ox in 0..ow {
                            let ix = (ox * stride + kj) as isize - padding as isize;
                            let v = if iy >= 0 && (iy as usize) < h && ix >= 0 && (ix as usize) < wid
                            {
                                x[xbase + (ci * h + iy as usize) * wid + ix as usize]
                            } else {
                                T::ZERO
                            };
                            col[krow * (oh * ow) + oy * ow + ox] = v;
                        }
                    }
                }
            }
        }
        let res = matmul(w, &col, c_out, kdim, oh * ow);
        out[img * c_out * oh * ow..(img + 1) * c_out * oh * ow].copy_from_slice(&res);
    }
    out
}

/// Gradients of conv2d w.r.t. input and kernel (direct scatter loops).
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward<T: Scalar>(
    x: &[T],
    w: &[T],
    gout: &[T],
    n: usize,
    c_in: usize,
    h: usize,
    wid: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
    need_x: bool,
    need_w: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let mut gx = if need_x {
        Some(vec![T::ZERO; n * c_in * h * wid])
    } else {
        None
    };
    let mut gw = if need_w {
        Some(vec![T::ZERO; c_out * c_in * kh * kw])
    } else {
        None
    };
    for img in 0..n {
        for co in 0..c_out {
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = gout[((img * c_out + co) * oh + oy) * ow + ox];
                    for ci in 0..c_in {
                        for ki in 0..kh {
                            let iy = (oy * stride + ki) as isize - padding as isize;
                            if iy < 0 || iy as usize >= h {
                                continue;
                            }
                            for kj in 0..kw {
                                let ix = (ox * stride + kj) as isize - padding as isize;
                                if ix < 0 || ix as usize >= wid {
                                    continue;
                                }
                                let xoff =
                                    ((img * c_in + ci) * h + iy as usize) * wid + ix as usize;
                                let woff = ((co * c_in + ci) * kh + ki) * kw + kj;
                                if let Some(gx) = gx.as_mut() {
                                    gx[xoff] += g * w[woff];
                                }
                                if let Some(gw) = gw.as_mut() {
                                    gw[woff] += g * x[xoff];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (gx, gw)
}

/// Max pooling; returns outputs and the flat input offset of each max
/// (first maximum wins on ties, fixed scan order).
#[allow(clippy::too_many_arguments)]
pub(crate) fn maxpool2d_forward<T: Scalar>(
    x: &[T],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
) -> (Vec<T>, Vec<usize>) {
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    for img in 0..n {
        for ch in 0..c {
            let base = (img * c + ch) * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best: Option<(T, usize)> = None;
                    for ki in 0..k {
                        let iy = (oy * stride + ki) as isize - padding as isize;
                        if iy < 0 || iy as usize >= h {
                            continue;
                        }
                        for kj in 0..k {
                            let ix = (ox * stride + kj) as isize - padding as isize;
                            if ix < 0 || ix as usize >= w {
                                continue;
                            }
                            let off = base + iy as usize * w + ix as usize;
                            let v = x[off];
                            match best {
                                Some((bv, _)) if !(v > bv) => {}
                                _ => best = Some((v, off)),
                            }
                        }
                    }
                    let (v, off) = best.expect("pool window never fully out of bounds");
                    out.push(v);
                    arg.push(off);
                }
            }
        }
    }
    (out, arg)
}
