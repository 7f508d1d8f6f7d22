//! Datasets, the resampling baseline and evaluation metrics.
//!
//! Images are `[H, W, C]` tensors with values in `[0, 1]`. Batches stack
//! them into `[B, H, W, C]`; models consuming conv input reshape to
//! channel-first themselves (exact for the single-channel data used here).

mod idx;
mod metrics;
mod resample;
mod synth;

pub use idx::{load_idx, parse_idx_images, parse_idx_labels, write_idx, encode_idx_images, encode_idx_labels};
pub use metrics::{accuracy, iou, mean_iou, psnr};
pub use resample::{resample_dataset, resample_image};
pub use synth::{synth_dataset, SynthKind};

use rand::seq::SliceRandom;

use crate::tensor_nn::Tensor;
use crate::{seeded_rng, Error, Result};

/// Ground truth attached to a dataset.
#[derive(Clone, Debug, PartialEq)]
pub enum Labels {
    None,
    Classes(Vec<usize>),
    /// Per-image masks with the same shape as the image, values in `[0,1]`.
    Masks(Vec<Tensor>),
}

/// Batched pragmatic ground truth `Z`.
#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    /// `[B, ...]` stacked masks.
    Masks(Tensor),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Masks(m) => m.batch_size(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    images: Vec<Tensor>,
    labels: Labels,
}

impl Dataset {
    /// Validates shape homogeneity, pixel range and label count.
    pub fn new(name: impl Into<String>, images: Vec<Tensor>, labels: Labels) -> Result<Self> {
        let name = name.into();
        if let Some(first) = images.first() {
            for (i, img) in images.iter().enumerate() {
                if img.shape() != first.shape() {
                    return Err(Error::shape(format!(
                        "{name}: image {i} has shape {:?}, expected {:?}",
                        img.shape(),
                        first.shape()
                    )));
                }
                if !img.is_finite() {
                    return Err(Error::NonFinite(format!("{name}: image {i}")));
                }
                if img.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::invalid(format!("{name}: image {i} has pixels outside [0,1]")));
                }
            }
        }
        let n_labels = match &labels {
            Labels::None => None,
            Labels::Classes(c) => Some(c.len()),
            Labels::Masks(m) => {
                if let (Some(first), Some(m0)) = (images.first(), m.first()) {
                    if m.iter().any(|t| t.shape() != m0.shape()) || m0.len() != first.len() {
                        return Err(Error::shape(format!("{name}: mask shapes disagree with images")));
                    }
                }
                Some(m.len())
            }
        };
        if let Some(n) = n_labels {
            if n != images.len() {
                return Err(Error::invalid(format!(
                    "{name}: {} images but {n} labels",
                    images.len()
                )));
            }
        }
        Ok(Self {
            name,
            images,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[Tensor] {
        &self.images
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    /// Per-image shape; empty for an empty dataset.
    pub fn image_shape(&self) -> Vec<usize> {
        self.images.first().map(|t| t.shape().to_vec()).unwrap_or_default()
    }

    pub fn image_len(&self) -> usize {
        self.image_shape().iter().product()
    }

    pub fn class_labels(&self) -> Option<&[usize]> {
        match &self.labels {
            Labels::Classes(c) => Some(c),
            _ => None,
        }
    }

    /// `1 + max label`, for classification datasets.
    pub fn class_count(&self) -> Option<usize> {
        self.class_labels().map(|c| c.iter().max().map_or(0, |m| m + 1))
    }

    /// Stacks the selected images into `[B, H, W, C]`.
    pub fn batch(&self, indices: &[usize]) -> Result<Tensor> {
        let items = indices
            .iter()
            .map(|&i| {
                self.images
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("{}: index {i} out of range", self.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        Tensor::stack(&items)
    }

    /// All images as one batch.
    pub fn all_images(&self) -> Result<Tensor> {
        Tensor::stack(&self.images)
    }

    pub fn targets(&self, indices: &[usize]) -> Result<Targets> {
        let check = |i: usize| {
            if i < self.len() {
                Ok(i)
            } else {
                Err(Error::invalid(format!("{}: index {i} out of range", self.name)))
            }
        };
        match &self.labels {
            Labels::None => Err(Error::invalid(format!("{} has no labels", self.name))),
            Labels::Classes(c) => Ok(Targets::Classes(
                indices.iter().map(|&i| check(i).map(|i| c[i])).collect::<Result<_>>()?,
            )),
            Labels::Masks(m) => {
                let items = indices
                    .iter()
                    .map(|&i| check(i).map(|i| m[i].clone()))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Targets::Masks(Tensor::stack(&items)?))
            }
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let images = indices
            .iter()
            .map(|&i| {
                self.images
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("{}: index {i} out of range", self.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        let labels = match &self.labels {
            Labels::None => Labels::None,
            Labels::Classes(c) => Labels::Classes(indices.iter().map(|&i| c[i]).collect()),
            Labels::Masks(m) => Labels::Masks(indices.iter().map(|&i| m[i].clone()).collect()),
        };
        Ok(Dataset {
            name: self.name.clone(),
            images,
            labels,
        })
    }

    /// First `n` items.
    pub fn take(&self, n: usize) -> Result<Dataset> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Shuffled split into `(train, test)` with `round(len * train_frac)`
    /// training items.
    pub fn split(&self, train_frac: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..=1.0).contains(&train_frac) {
            return Err(Error::invalid(format!("train fraction {train_frac} outside [0,1]")));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut seeded_rng(seed));
        let n_train = (self.len() as f64 * train_frac).round() as usize;
        let (a, b) = idx.split_at(n_train);
        Ok((self.subset(a)?, self.subset(b)?))
    }

    /// Same images without ground truth (what the transmitter holds).
    pub fn without_labels(&self) -> Dataset {
        Dataset {
            name: self.name.clone(),
            images: self.images.clone(),
            labels: Labels::None,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

/// Shuffled mini-batches of `0..n` for one epoch. The permutation depends
/// only on `seed`, so both protocol endpoints can derive it independently.
pub fn epoch_batches(n: usize, batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded_rng(seed));
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// In-order mini-batches of `0..n` (evaluation passes).
pub fn sequential_batches(n: usize, batch_size: usize) -> Vec<Vec<usize>> {
    let idx: Vec<usize> = (0..n).collect();
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}
