use serde::{Deserialize, Serialize};

use super::{TaskKind, Targets};
use crate::datasets_metrics::{accuracy, epoch_batches, mean_iou, Dataset, Labels};
use crate::tensor_nn::{mse_loss, softmax_cross_entropy, AdamConfig, AdamState, Model, ModelBuilder, Tensor};
use crate::{seeded_rng, Error, Result};

/// The receiver's task function `phi`, applied to reconstructions. It is
/// frozen during coder training: [`Pragmatic::pull_back`] only propagates
/// gradients to its input.
pub trait Pragmatic {
    fn apply(&mut self, k_hat: &Tensor) -> Result<Tensor>;

    /// Maps `dL/dZ_hat` to `dL/dK_hat` through the most recent `apply`.
    fn pull_back(&mut self, grad_z_hat: &Tensor) -> Result<Tensor>;

    /// Evaluation-only application; records nothing.
    fn infer(&self, k_hat: &Tensor) -> Result<Tensor>;
}

impl Pragmatic for Model {
    fn apply(&mut self, k_hat: &Tensor) -> Result<Tensor> {
        self.forward(k_hat)
    }

    fn pull_back(&mut self, grad_z_hat: &Tensor) -> Result<Tensor> {
        let g = self.backward(grad_z_hat)?;
        self.zero_grad();
        Ok(g)
    }

    fn infer(&self, k_hat: &Tensor) -> Result<Tensor> {
        Model::infer(self, k_hat)
    }
}

/// `Z_hat = K_hat`; stands in for a mask task whose output is the image.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IdentityPragmatic;

impl Pragmatic for IdentityPragmatic {
    fn apply(&mut self, k_hat: &Tensor) -> Result<Tensor> {
        Ok(k_hat.clone())
    }

    fn pull_back(&mut self, grad_z_hat: &Tensor) -> Result<Tensor> {
        Ok(grad_z_hat.clone())
    }

    fn infer(&self, k_hat: &Tensor) -> Result<Tensor> {
        Ok(k_hat.clone())
    }
}

pub fn pragmatic_apply<P: Pragmatic + ?Sized>(phi: &mut P, k_hat: &Tensor) -> Result<Tensor> {
    phi.apply(k_hat)
}

/// Layout of a pragmatic model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
pub enum PragmaticArch {
    /// Flatten then one dense layer: class logits, or per-pixel mask
    /// probabilities through a sigmoid.
    Linear,
    /// Flatten, dense, relu, dense (plus sigmoid for masks).
    Mlp { hidden: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PragmaticTrainConfig {
    pub arch: PragmaticArch,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for PragmaticTrainConfig {
    fn default() -> Self {
        Self {
            arch: PragmaticArch::Linear,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainedPragmatic {
    pub model: Model,
    pub task_kind: TaskKind,
    /// Accuracy (classes) or mean IoU (masks) on the training set.
    pub train_metric: f64,
    pub test_metric: Option<f64>,
}

fn task_of(d: &Dataset) -> Result<TaskKind> {
    match d.labels() {
        Labels::Classes(_) => Ok(TaskKind::Discrete),
        Labels::Masks(_) => Ok(TaskKind::Continuous),
        Labels::None => Err(Error::invalid(format!("{} has no labels to learn from", d.name))),
    }
}

fn build(arch: PragmaticArch, input: &[usize], task: TaskKind, out_classes: usize, seed: u64) -> Result<Model> {
    let mut rng = seeded_rng(seed);
    let out_len = match task {
        TaskKind::Discrete => out_classes,
        TaskKind::Continuous => input.iter().product(),
    };
    let mut b = ModelBuilder::new(input).flatten();
    if let PragmaticArch::Mlp { hidden } = arch {
        b = b.dense(hidden, &mut rng).relu();
    }
    b = b.dense(out_len, &mut rng);
    if task == TaskKind::Continuous {
        b = b.sigmoid().reshape(input);
    }
    b.build()
}

/// Loss and `dL/dZ_hat` used to fit `phi` itself.
fn fit_loss(z_hat: &Tensor, targets: &Targets) -> Result<(f64, Tensor)> {
    let lg = match targets {
        Targets::Classes(c) => softmax_cross_entropy(z_hat, c)?,
        Targets::Masks(m) => mse_loss(z_hat, &m.clone().reshape(z_hat.shape().to_vec())?)?,
    };
    Ok((lg.value, lg.grad))
}

/// Accuracy (classes) or mean IoU (masks) of `phi` on `images`.
pub fn pragmatic_metric(phi: &Model, images: &Tensor, targets: &Targets) -> Result<f64> {
    let z_hat = phi.infer(images)?;
    metric_from_output(&z_hat, targets)
}

pub fn metric_from_output(z_hat: &Tensor, targets: &Targets) -> Result<f64> {
    match targets {
        Targets::Classes(c) => accuracy(&z_hat.argmax_rows(), c),
        Targets::Masks(m) => mean_iou(z_hat, &m.clone().reshape(z_hat.shape().to_vec())?),
    }
}

/// Fits `phi` on a labelled dataset with mini-batch Adam, then returns it
/// frozen together with its train (and optional test) metric.
pub fn train_pragmatic(
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &PragmaticTrainConfig,
) -> Result<TrainedPragmatic> {
    if train.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    let task = task_of(train)?;
    let classes = match (train.class_count(), test.and_then(Dataset::class_count)) {
        (Some(a), Some(b)) => a.max(b),
        (Some(a), None) => a,
        _ => 0,
    };
    let mut model = build(cfg.arch, &train.image_shape(), task, classes, cfg.seed)?;
    let mut adam = AdamState::new(cfg.adam)?;
    for epoch in 0..cfg.epochs {
        let seed = cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        for idx in epoch_batches(train.len(), cfg.batch_size, seed) {
            let x = train.batch(&idx)?;
            let z = train.targets(&idx)?;
            model.zero_grad();
            let z_hat = model.forward(&x)?;
            let (_, g) = fit_loss(&z_hat, &z)?;
            model.backward(&g)?;
            adam.step_model(&mut model)?;
        }
    }
    model.zero_grad();
    model.clear_tape();
    let all: Vec<usize> = (0..train.len()).collect();
    let train_metric = pragmatic_metric(&model, &train.all_images()?, &train.targets(&all)?)?;
    let test_metric = match test {
        Some(t) if !t.is_empty() => {
            let idx: Vec<usize> = (0..t.len()).collect();
            Some(pragmatic_metric(&model, &t.all_images()?, &t.targets(&idx)?)?)
        }
        _ => None,
    };
    Ok(TrainedPragmatic {
        model,
        task_kind: task,
        train_metric,
        test_metric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_blobs(n: usize) -> Dataset {
        let mut imgs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let base = if c == 0 { 0.2 } else { 0.8 };
            let jitter = (i as f64 * 0.37).sin() * 0.05;
            imgs.push(Tensor::new(vec![2], vec![base + jitter, base - jitter]).unwrap());
            labels.push(c);
        }
        Dataset::new("blobs2d", imgs, Labels::Classes(labels)).unwrap()
    }

    #[test]
    fn identity_stub_passes_through() {
        let k = Tensor::row(&[0.1, 0.9]).unwrap();
        assert_eq!(pragmatic_apply(&mut IdentityPragmatic, &k).unwrap(), k);
    }

    #[test]
    fn separable_set_learned_perfectly() {
        let d = two_blobs(40);
        let cfg = PragmaticTrainConfig {
            epochs: 200,
            batch_size: 8,
            adam: AdamConfig::with_eta(0.05),
            ..Default::default()
        };
        let t = train_pragmatic(&d, Some(&two_blobs(20)), &cfg).unwrap();
        assert_eq!(t.train_metric, 1.0);
        assert_eq!(t.test_metric, Some(1.0));
    }

    #[test]
    fn single_class_trivially_perfect() {
        let imgs = vec![Tensor::full(&[2], 0.3); 5];
        let d = Dataset::new("one", imgs, Labels::Classes(vec![0; 5])).unwrap();
        let t = train_pragmatic(&d, None, &PragmaticTrainConfig { epochs: 2, ..Default::default() }).unwrap();
        assert_eq!(t.train_metric, 1.0);
    }

    #[test]
    fn model_pull_back_leaves_params() {
        let d = two_blobs(4);
        let mut t = train_pragmatic(&d, None, &PragmaticTrainConfig { epochs: 1, ..Default::default() }).unwrap();
        let before = t.model.param_vector();
        let z = t.model.apply(&d.all_images().unwrap()).unwrap();
        let g = t.model.pull_back(&z.map(|_| 1.0)).unwrap();
        assert_eq!(g.shape(), &[4, 2]);
        assert_eq!(t.model.param_vector(), before);
        assert!(t.model.grad_vector().iter().all(|&v| v == 0.0));
    }
}
