use super::{LossConfig, PragmaticDistortion, Targets};
use crate::tensor_nn::{mse_loss, softmax_cross_entropy, Tensor};
use crate::{Error, Result};

/// Pragmatic ground truth of a single sample.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Class(usize),
    Mask(Tensor),
}

/// One sample's observable, reconstruction, ground truth and task output.
/// `z` and `z_hat` may be omitted when `lambda = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub k: Tensor,
    pub k_hat: Tensor,
    pub z: Option<Target>,
    pub z_hat: Option<Tensor>,
}

/// Unweighted distortion terms and their gradients on a batch.
#[derive(Clone, Debug)]
pub struct Components {
    pub d_ob: f64,
    /// `dD_ob / dK_hat`.
    pub grad_ob: Tensor,
    /// `(D_pr, dD_pr / dZ_hat)`, absent when not computed.
    pub pragmatic: Option<(f64, Tensor)>,
}

/// Weighted semantic distortion of a batch.
#[derive(Clone, Debug)]
pub struct SemanticLoss {
    pub value: f64,
    pub d_ob: f64,
    pub d_pr: Option<f64>,
    /// Direct gradient `lambda * alpha * dD_ob / dK_hat`.
    pub grad_k_hat: Tensor,
    /// `(1 - lambda) * dD_pr / dZ_hat`, to be pulled back through the
    /// pragmatic function.
    pub grad_z_hat: Option<Tensor>,
}

/// Computes both terms on `[B, ...]` batches. `z`/`z_hat` are skipped when
/// either is `None`.
pub fn distortion_components(
    k: &Tensor,
    k_hat: &Tensor,
    z: Option<&Targets>,
    z_hat: Option<&Tensor>,
    d_pr: PragmaticDistortion,
) -> Result<Components> {
    let ob = mse_loss(k_hat, k)?;
    let pragmatic = match (z, z_hat) {
        (Some(z), Some(z_hat)) => Some(pragmatic_term(z, z_hat, d_pr)?),
        _ => None,
    };
    Ok(Components {
        d_ob: ob.value,
        grad_ob: ob.grad,
        pragmatic,
    })
}

fn pragmatic_term(z: &Targets, z_hat: &Tensor, d_pr: PragmaticDistortion) -> Result<(f64, Tensor)> {
    let lg = match (d_pr, z) {
        (PragmaticDistortion::CrossEntropy, Targets::Classes(labels)) => {
            let logits = if z_hat.rank() == 2 {
                z_hat.clone()
            } else {
                z_hat.clone().reshape(vec![z_hat.batch_size(), z_hat.sample_len()])?
            };
            let mut lg = softmax_cross_entropy(&logits, labels)?;
            lg.grad = lg.grad.reshape(z_hat.shape().to_vec())?;
            lg
        }
        (PragmaticDistortion::Mse, Targets::Masks(masks)) => {
            if masks.len() != z_hat.len() {
                return Err(Error::shape(format!(
                    "mask targets {:?} vs pragmatic output {:?}",
                    masks.shape(),
                    z_hat.shape()
                )));
            }
            let masks = masks.clone().reshape(z_hat.shape().to_vec())?;
            mse_loss(z_hat, &masks)?
        }
        (d, _) => {
            return Err(Error::invalid(format!("{d:?} does not match the kind of targets given")));
        }
    };
    Ok((lg.value, lg.grad))
}

impl Components {
    /// Applies the weights of `cfg`. Requires the pragmatic term unless
    /// `lambda = 1`.
    pub fn weighted(&self, cfg: &LossConfig) -> Result<SemanticLoss> {
        cfg.validate()?;
        let w_ob = cfg.lambda * cfg.alpha;
        let w_pr = 1.0 - cfg.lambda;
        let (d_pr, grad_z_hat) = match (&self.pragmatic, cfg.reconstruction_only_weight()) {
            (_, true) => (self.pragmatic.as_ref().map(|p| p.0), None),
            (Some((d, g)), false) => (Some(*d), Some(g.scale(w_pr))),
            (None, false) => {
                return Err(Error::invalid("pragmatic term required when lambda < 1"));
            }
        };
        let value = w_ob * self.d_ob + if cfg.reconstruction_only_weight() { 0.0 } else { w_pr * d_pr.unwrap_or(0.0) };
        if !value.is_finite() {
            return Err(Error::NonFinite("semantic distortion".into()));
        }
        Ok(SemanticLoss {
            value,
            d_ob: self.d_ob,
            d_pr,
            grad_k_hat: self.grad_ob.scale(w_ob),
            grad_z_hat,
        })
    }
}

/// `alpha` that equalises the two terms on a calibration batch; 1 when
/// either term is zero or missing.
pub fn calibrate_alpha(c: &Components) -> f64 {
    match c.pragmatic {
        Some((d_pr, _)) if c.d_ob > 0.0 && d_pr > 0.0 && (d_pr / c.d_ob).is_finite() => d_pr / c.d_ob,
        _ => 1.0,
    }
}

/// Semantic distortion of a single sample.
pub fn semantic_distortion(sample: &TrainingSample, cfg: &LossConfig) -> Result<SemanticLoss> {
    esd_batch(std::slice::from_ref(sample), cfg)
}

/// Empirical semantic distortion: the mean of the per-sample distortion over
/// `samples`. Gradients are with respect to the batched `K_hat` / `Z_hat`.
pub fn esd_batch(samples: &[TrainingSample], cfg: &LossConfig) -> Result<SemanticLoss> {
    if samples.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let k = Tensor::stack(&samples.iter().map(|s| s.k.clone()).collect::<Vec<_>>())?;
    let k_hat = Tensor::stack(&samples.iter().map(|s| s.k_hat.clone()).collect::<Vec<_>>())?;
    let (z, z_hat) = if cfg.reconstruction_only_weight() {
        (None, None)
    } else {
        let z_hat = samples
            .iter()
            .map(|s| s.z_hat.clone().ok_or_else(|| Error::invalid("sample without z_hat")))
            .collect::<Result<Vec<_>>>()?;
        let z = samples
            .iter()
            .map(|s| s.z.clone().ok_or_else(|| Error::invalid("sample without z")))
            .collect::<Result<Vec<_>>>()?;
        let targets = if z.iter().all(|t| matches!(t, Target::Class(_))) {
            Targets::Classes(
                z.iter()
                    .map(|t| match t {
                        Target::Class(c) => *c,
                        Target::Mask(_) => unreachable!(),
                    })
                    .collect(),
            )
        } else if z.iter().all(|t| matches!(t, Target::Mask(_))) {
            Targets::Masks(Tensor::stack(
                &z.iter()
                    .map(|t| match t {
                        Target::Mask(m) => m.clone(),
                        Target::Class(_) => unreachable!(),
                    })
                    .collect::<Vec<_>>(),
            )?)
        } else {
            return Err(Error::invalid("batch mixes class and mask targets"));
        };
        (Some(targets), Some(Tensor::stack(&z_hat)?))
    };
    distortion_components(&k, &k_hat, z.as_ref(), z_hat.as_ref(), cfg.d_pr)?.weighted(cfg)
}
