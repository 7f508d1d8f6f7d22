//! How far apart two image domains are, measured by how well a linear
//! classifier can tell their samples apart.
//!
//! Samples from the library domain are labelled 0, observed samples 1. A
//! classifier trained on 80% of the merged set is scored on the rest; its
//! held-out error `eps` gives the proxy A-distance `d_A = 2 (1 - 2 eps)`,
//! from 0 (indistinguishable) to 2 (perfectly separable). This is only a
//! trainable stand-in for the H-delta-H divergence, whose supremum over a
//! hypothesis class is not computed.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datasets_metrics::{resample_dataset, Dataset};
use crate::tensor_nn::{Model, ModelBuilder, Tensor};
use crate::{seeded_rng, Error, Result};

/// Share of the merged set used to train the domain classifier.
pub const TRAIN_FRACTION: f64 = 0.8;

/// A labelled two-domain sample with a fixed train/test partition.
#[derive(Clone, Debug, PartialEq)]
pub struct MergedDataset {
    samples: Vec<Tensor>,
    /// 0 = library, 1 = observed.
    domains: Vec<u8>,
    train: Vec<usize>,
    test: Vec<usize>,
}

impl MergedDataset {
    /// Merges two equally long, equally shaped sample lists, shuffles them
    /// with `seed` and splits 80/20.
    pub fn from_samples(library: Vec<Tensor>, observed: Vec<Tensor>, seed: u64) -> Result<Self> {
        if library.is_empty() || library.len() != observed.len() {
            return Err(Error::invalid(format!(
                "merged set needs equal non-zero counts, got {} and {}",
                library.len(),
                observed.len()
            )));
        }
        let shape = library[0].shape().to_vec();
        if let Some(t) = library.iter().chain(&observed).find(|t| t.shape() != shape) {
            return Err(Error::shape(format!("sample shape {:?} differs from {shape:?}", t.shape())));
        }
        let n = library.len();
        let domains: Vec<u8> = std::iter::repeat_n(0, n).chain(std::iter::repeat_n(1, n)).collect();
        let samples: Vec<Tensor> = library.into_iter().chain(observed).collect();
        let mut order: Vec<usize> = (0..2 * n).collect();
        order.shuffle(&mut seeded_rng(seed));
        let n_train = (2.0 * n as f64 * TRAIN_FRACTION).round() as usize;
        let test = order.split_off(n_train);
        Ok(Self {
            samples,
            domains,
            train: order,
            test,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_shape(&self) -> &[usize] {
        self.samples[0].shape()
    }

    pub fn samples(&self) -> &[Tensor] {
        &self.samples
    }

    pub fn domains(&self) -> &[u8] {
        &self.domains
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.train
    }

    pub fn test_indices(&self) -> &[usize] {
        &self.test
    }

    fn batch(&self, idx: &[usize]) -> Result<(Tensor, Vec<f64>)> {
        let x = Tensor::stack(&idx.iter().map(|&i| self.samples[i].clone()).collect::<Vec<_>>())?;
        Ok((x, idx.iter().map(|&i| f64::from(self.domains[i])).collect()))
    }
}

/// Averages every pixel's channels into one.
fn to_gray(d: &Dataset) -> Result<Dataset> {
    let images = d
        .images()
        .iter()
        .map(|img| {
            let (h, w, c) = (img.shape()[0], img.shape()[1], img.shape()[2]);
            let data = img.data().chunks(c).map(|px| px.iter().sum::<f64>() / c as f64).collect();
            Tensor::new(vec![h, w, 1], data)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(d.name.clone(), images, d.labels().clone())
}

/// Draws `n` random images from each dataset and merges them. Observed
/// images are resampled to the library's height and width first; if the
/// channel counts differ, both sides are converted to grayscale.
pub fn build_merged(library: &Dataset, observed: &Dataset, n: usize, seed: u64) -> Result<MergedDataset> {
    if n == 0 {
        return Err(Error::invalid("merged set needs n >= 1 per domain"));
    }
    if library.len() < n || observed.len() < n {
        return Err(Error::invalid(format!(
            "need {n} samples per domain, have {} and {}",
            library.len(),
            observed.len()
        )));
    }
    let (ls, os) = (library.image_shape(), observed.image_shape());
    let (mut lib, mut obs) = (library.clone(), observed.clone());
    if ls != os {
        let (&[h, w, lc], &[_, _, oc]) = (&ls[..], &os[..]) else {
            return Err(Error::shape(format!("cannot unify sample shapes {ls:?} and {os:?}")));
        };
        if lc != oc {
            lib = to_gray(&lib)?;
            obs = to_gray(&obs)?;
        }
        obs = resample_dataset(&obs, h, w)?;
    }
    let mut rng = seeded_rng(seed);
    let mut pick = |d: &Dataset| {
        let mut idx: Vec<usize> = (0..d.len()).collect();
        idx.shuffle(&mut rng);
        idx.truncate(n);
        idx.into_iter().map(|i| d.images()[i].clone()).collect::<Vec<_>>()
    };
    let a = pick(&lib);
    let b = pick(&obs);
    MergedDataset::from_samples(a, b, seed.wrapping_add(1))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DomainClassifierConfig {
    pub epochs: usize,
    /// Plain SGD step size.
    pub eta: f64,
    /// Samples per SGD step.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for DomainClassifierConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            eta: 0.01,
            batch_size: 1,
            seed: 0,
        }
    }
}

/// A trained linear domain classifier and its errors.
#[derive(Clone, Debug)]
pub struct DomainClassifier {
    /// Flatten, dense to one unit, sigmoid: `P(observed | x)`.
    pub model: Model,
    pub train_error: f64,
    /// Held-out error `eps`.
    pub test_error: f64,
}

impl DomainClassifier {
    pub fn pad(&self) -> f64 {
        pad(self.test_error)
    }
}

fn error_rate(model: &Model, x: &Tensor, y: &[f64]) -> Result<f64> {
    let p = model.infer(x)?;
    let wrong = p
        .data()
        .iter()
        .zip(y)
        .filter(|&(&p, &y)| (p >= 0.5) != (y == 1.0))
        .count();
    Ok(wrong as f64 / y.len() as f64)
}

/// Fits a logistic-regression domain classifier with mini-batch SGD on the
/// binary cross-entropy and reports its held-out error.
pub fn train_domain_classifier(m: &MergedDataset, cfg: &DomainClassifierConfig) -> Result<DomainClassifier> {
    if m.test.is_empty() || m.train.is_empty() {
        return Err(Error::invalid("merged set too small for a train/test split"));
    }
    if !(cfg.eta > 0.0) || !cfg.eta.is_finite() || cfg.batch_size == 0 {
        return Err(Error::invalid("domain classifier needs eta > 0 and batch_size > 0"));
    }
    let mut rng = seeded_rng(cfg.seed);
    let mut model = ModelBuilder::new(m.sample_shape()).flatten().dense(1, &mut rng).sigmoid().build()?;
    let mut order = m.train.clone();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for idx in order.chunks(cfg.batch_size) {
            let (x, y) = m.batch(idx)?;
            model.zero_grad();
            let p = model.forward(&x)?;
            let n = y.len() as f64;
            // d/dp of mean binary cross-entropy; the sigmoid backward turns
            // it into (p - y) / n at the logit.
            let grad = p
                .data()
                .iter()
                .zip(&y)
                .map(|(&p, &y)| {
                    let p = p.clamp(1e-12, 1.0 - 1e-12);
                    (p - y) / (p * (1.0 - p) * n)
                })
                .collect();
            model.backward(&Tensor::new(p.shape().to_vec(), grad)?)?;
            for param in model.params_mut() {
                let g = param.grad().map(<[f64]>::to_vec).unwrap_or_default();
                for (v, g) in param.data_mut().iter_mut().zip(g) {
                    *v -= cfg.eta * g;
                }
            }
        }
    }
    model.zero_grad();
    model.clear_tape();
    let (xt, yt) = m.batch(&m.train)?;
    let (xv, yv) = m.batch(&m.test)?;
    Ok(DomainClassifier {
        train_error: error_rate(&model, &xt, &yt)?,
        test_error: error_rate(&model, &xv, &yv)?,
        model,
    })
}

/// Proxy A-distance `2 (1 - 2 eps)`, clamped to `[0, 2]` (worse than
/// chance counts as indistinguishable).
pub fn pad(epsilon: f64) -> f64 {
    (2.0 * (1.0 - 2.0 * epsilon)).clamp(0.0, 2.0)
}

/// Builds the merged set from `n` samples per domain, trains the
/// classifier and returns it; `pad()` on the result gives `d_A`.
pub fn estimate_pad(
    library: &Dataset,
    observed: &Dataset,
    n: usize,
    cfg: &DomainClassifierConfig,
) -> Result<DomainClassifier> {
    let merged = build_merged(library, observed, n, cfg.seed)?;
    train_domain_classifier(&merged, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets_metrics::{synth_dataset, SynthKind};

    #[test]
    fn pad_endpoints() {
        assert_eq!(pad(0.5), 0.0);
        assert_eq!(pad(0.0), 2.0);
        assert_eq!(pad(0.9), 0.0);
        assert!((pad(0.25) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn one_sample_per_domain() {
        let d = synth_dataset(SynthKind::ShiftedBlobs { offset: 0.0 }, 5, 1).unwrap();
        let m = build_merged(&d, &d, 1, 0).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.domains(), &[0, 1]);
    }

    #[test]
    fn split_sizes() {
        let d = synth_dataset(SynthKind::ShiftedBlobs { offset: 0.0 }, 100, 1).unwrap();
        let m = build_merged(&d, &d, 100, 0).unwrap();
        assert_eq!(m.train_indices().len(), 160);
        assert_eq!(m.test_indices().len(), 40);
    }

    #[test]
    fn too_few_samples() {
        let d = synth_dataset(SynthKind::ShiftedBlobs { offset: 0.0 }, 5, 1).unwrap();
        assert!(build_merged(&d, &d, 6, 0).is_err());
    }

    #[test]
    fn channel_mismatch_goes_gray() {
        let a = synth_dataset(SynthKind::ShiftedBlobs { offset: 0.0 }, 4, 1).unwrap();
        let rgb: Vec<Tensor> = a
            .images()
            .iter()
            .map(|t| Tensor::new(vec![8, 8, 3], t.data().iter().flat_map(|&v| [v, v, v]).collect()).unwrap())
            .collect();
        let b = Dataset::new("rgb", rgb, crate::datasets_metrics::Labels::None).unwrap();
        let m = build_merged(&a, &b, 4, 0).unwrap();
        assert_eq!(m.sample_shape(), &[8, 8, 1]);
    }

    #[test]
    fn separated_scalar_features() {
        use rand_distr::{Distribution, Normal};
        let mut rng = seeded_rng(3);
        let a = Normal::new(0.0, 0.1).unwrap();
        let b = Normal::new(10.0, 0.1).unwrap();
        let lib = (0..50).map(|_| Tensor::new(vec![1], vec![a.sample(&mut rng)]).unwrap()).collect();
        let obs = (0..50).map(|_| Tensor::new(vec![1], vec![b.sample(&mut rng)]).unwrap()).collect();
        let m = MergedDataset::from_samples(lib, obs, 1).unwrap();
        let c = train_domain_classifier(&m, &DomainClassifierConfig::default()).unwrap();
        assert_eq!(c.test_error, 0.0);
    }
}
