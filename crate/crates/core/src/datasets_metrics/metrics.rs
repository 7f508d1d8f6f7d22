use crate::tensor_nn::Tensor;
use crate::{Error, Result};

/// PSNR in dB with peak value 1: `10 log10(1 / MSE)`. Identical inputs give
/// `f64::INFINITY`.
pub fn psnr(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("psnr: {:?} vs {:?}", a.shape(), b.shape())));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// Fraction of equal entries.
pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64> {
    if preds.len() != labels.len() || preds.is_empty() {
        return Err(Error::invalid(format!(
            "accuracy needs equal non-empty inputs, got {} and {}",
            preds.len(),
            labels.len()
        )));
    }
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Intersection over union after thresholding both masks at 0.5. Two empty
/// masks agree perfectly (IoU 1).
pub fn iou(a: &Tensor, b: &Tensor) -> Result<f64> {
    iou_slices(a.data(), b.data())
}

fn iou_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("iou: {} vs {} values", a.len(), b.len())));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        let (p, q) = (x >= 0.5, y >= 0.5);
        inter += (p && q) as usize;
        union += (p || q) as usize;
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Mean per-sample IoU over two `[B, ...]` mask batches.
pub fn mean_iou(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.expect_same_shape(b, "mean_iou")?;
    let n = a.batch_size();
    let mut total = 0.0;
    for i in 0..n {
        total += iou_slices(a.sample(i), b.sample(i))?;
    }
    Ok(total / n as f64)
}
