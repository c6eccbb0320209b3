use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Max-shifted softmax of one row.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Row-wise softmax over the last axis.
pub fn softmax_rows<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let c = logits.last_dim();
    let data = logits.data().chunks_exact(c).flat_map(softmax).collect();
    Tensor::from_vec(logits.shape(), data).expect("same shape")
}

/// `-ln(probs[label])`.
pub fn sparse_ce<T: Scalar>(probs: &[T], label: usize) -> T {
    -probs[label].ln()
}

#[derive(Debug, Clone)]
pub struct CrossEntropyOutput<T> {
    /// Mean loss over counted rows (0 when no row counts).
    pub loss: T,
    pub probs: Tensor<T>,
    /// Gradient w.r.t. the logits of the mean loss.
    pub dlogits: Tensor<T>,
    pub counted: usize,
}

/// Fused softmax + sparse categorical cross-entropy over rows of `logits`.
/// Rows with `mask[i] == false` contribute neither loss nor gradient.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[u8],
    mask: &[bool],
) -> Result<CrossEntropyOutput<T>> {
    let (rows, c) = (logits.n_rows(), logits.last_dim());
    if labels.len() != rows || mask.len() != rows {
        return Err(Error::Shape(format!(
            "{rows} logit rows but {} labels / {} mask entries",
            labels.len(),
            mask.len()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l as usize >= c) {
        return Err(Error::Domain(format!("label {l} outside 0..{c}")));
    }
    let probs = softmax_rows(logits);
    let counted = mask.iter().filter(|&&m| m).count();
    let mut dlogits = Tensor::zeros(logits.shape());
    let mut loss = T::zero();
    if counted > 0 {
        let inv = T::one() / T::lit(counted as f64);
        for i in (0..rows).filter(|&i| mask[i]) {
            let p = probs.row(i);
            let label = labels[i] as usize;
            loss += sparse_ce(p, label);
            let g = dlogits.row_mut(i);
            for k in 0..c {
                g[k] = p[k] * inv;
            }
            g[label] -= inv;
        }
        loss *= inv;
    }
    Ok(CrossEntropyOutput {
        loss,
        probs,
        dlogits,
        counted,
    })
}
