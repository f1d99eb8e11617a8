//! Classification loss.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::record_op;
use crate::tensor::Tensor;

/// Mean cross-entropy of `[B×C]` logits against integer labels, computed in
/// log-sum-exp form. Backward is `(softmax − onehot) / B`.
pub fn cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<Tensor<T>> {
    if logits.rank() != 2 {
        return Err(Error::Rank(format!(
            "cross_entropy expects [B,C] logits, got {:?}",
            logits.dims()
        )));
    }
    let (b, c) = (logits.dims()[0], logits.dims()[1]);
    if labels.len() != b {
        return Err(Error::shape(format!(
            "cross_entropy: {} labels for batch of {b}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::Index(format!(
            "label {bad} out of range for {c} classes"
        )));
    }
    let zv = logits.to_vec();
    let mut probs = Vec::with_capacity(b * c);
    let mut total = T::ZERO;
    for (row, &y) in zv.chunks_exact(c).zip(labels.iter()) {
        let mut m = row[0];
        for &v in row {
            m = m.maximum(v);
        }
        let mut sum = T::ZERO;
        let start = probs.len();
        for &v in row {
            let e = (v - m).exp();
            probs.push(e);
            sum += e;
        }
        for p in &mut probs[start..] {
            *p /= sum;
        }
        // lse − z[y] = ln(Σ exp(z − m)) + m − z[y]
        total += sum.ln() + m - row[y];
    }
    let inv_b = T::ONE / T::from_f64(b as f64);
    let mut out = Tensor::scalar(total * inv_b);
    let labels = labels.to_vec();
    record_op(&mut out, &[logits], move |gout, _| {
        let g = gout[0] * inv_b;
        let mut gx = Vec::with_capacity(b * c);
        for (row, &y) in probs.chunks_exact(c).zip(labels.iter()) {
            for (j, &p) in row.iter().enumerate() {
                let onehot = if j == y { T::ONE } else { T::ZERO };
                gx.push((p - onehot) * g);
            }
        }
        vec![Some(gx)]
    });
    Ok(out)
}
