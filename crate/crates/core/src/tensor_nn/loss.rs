//! Scalar losses with their gradients.

use super::Tensor;
use crate::{Error, Result};

/// A scalar loss value and its gradient with respect to the first argument.
#[derive(Clone, Debug)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Tensor,
}

/// Mean squared difference over all elements.
pub fn mse_loss(a: &Tensor, b: &Tensor) -> Result<LossGrad> {
    a.expect_same_shape(b, "mse_loss")?;
    let n = a.len() as f64;
    let diff = a.sub(b)?;
    let value = diff.data().iter().map(|d| d * d).sum::<f64>() / n;
    Ok(LossGrad {
        value,
        grad: diff.scale(2.0 / n),
    })
}

/// Mean absolute difference over all elements; the subgradient at zero is 0.
pub fn l1_loss(a: &Tensor, b: &Tensor) -> Result<LossGrad> {
    a.expect_same_shape(b, "l1_loss")?;
    let n = a.len() as f64;
    let diff = a.sub(b)?;
    let value = diff.data().iter().map(|d| d.abs()).sum::<f64>() / n;
    Ok(LossGrad {
        value,
        grad: diff.map(|d| {
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        }),
    })
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    for i in 0..logits.batch_size() {
        let row = out.sample_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Cross entropy of `softmax(logits)` against one-hot labels, averaged over
/// the batch. `logits` has shape `[batch, classes]`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<LossGrad> {
    if logits.rank() != 2 {
        return Err(Error::shape(format!(
            "cross entropy expects [batch, classes] logits, got {:?}",
            logits.shape()
        )));
    }
    let (b, c) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != b {
        return Err(Error::shape(format!("{} labels for batch of {b}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::invalid(format!("label {bad} out of range for {c} classes")));
    }
    logits.check_finite("logits")?;
    let mut value = 0.0;
    let mut grad = Tensor::zeros(&[b, c]);
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.sample(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        value += lse - row[label];
        let g = grad.sample_mut(i);
        for j in 0..c {
            g[j] = (row[j] - lse).exp() / b as f64;
        }
        g[label] -= 1.0 / b as f64;
    }
    Ok(LossGrad {
        value: value / b as f64,
        grad,
    })
}
