//! Cycle-consistent adversarial adaptation of observed data into the
//! library domain, so coders and task function trained on the library can
//! be reused unchanged.
//!
//! Two generators map between domains (`G_K`: observed to library, `G_S`:
//! library to observed) and two discriminators judge each domain. The
//! objective is
//!
//! ```text
//! L = L_gan(G_S, D_S) + L_gan(G_K, D_K) + w * L_cycle
//! L_gan(G, D) = mean log D(real) + mean log(1 - D(G(source)))
//! L_cycle     = mean |G_K(G_S(K)) - K| + mean |G_S(G_K(S)) - S|
//! ```
//!
//! Generators descend it, discriminators ascend it. Only `G_K` is needed
//! afterwards.

mod compare;
mod train;

pub use compare::{compare_adaptation, DaComparison, DaEvalConfig};
pub use train::{discriminator_step, generator_step, train_cgan, CganEpochStats, CganOutcome, CganTrainer, GeneratorStep};

use serde::{Deserialize, Serialize};

use crate::datasets_metrics::Dataset;
use crate::tensor_nn::{decode_model, encode_model, l1_loss, AdamConfig, Layer, Model, ModelBuilder, Tensor};
use crate::{seeded_rng, Error, Result};

/// Leading bytes of a serialized [`CganBundle`].
pub const BUNDLE_MAGIC: &[u8; 4] = b"CGAN";

/// Clamp applied to discriminator outputs before taking logs.
pub const PROB_EPS: f64 = 1e-7;

/// Generator layout.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
pub enum GeneratorArch {
    /// One dense map between the flattened domains.
    Linear,
    /// Dense, tanh, dense.
    Mlp { hidden: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CganConfig {
    pub epochs: usize,
    /// Batch size `V` per domain.
    pub batch_size: usize,
    /// Weight `w` of the cycle term.
    pub cycle_weight: f64,
    pub generator: GeneratorArch,
    /// Start linear generators at the identity when domains have equal size.
    pub identity_init: bool,
    /// Hidden width of the discriminators (0 = linear discriminator, which
    /// a linear generator can outrun by pushing samples off its boundary).
    pub disc_hidden: usize,
    pub adam_g: AdamConfig,
    pub adam_d: AdamConfig,
    pub seed: u64,
}

impl Default for CganConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            cycle_weight: 10.0,
            generator: GeneratorArch::Linear,
            identity_init: true,
            disc_hidden: 16,
            adam_g: AdamConfig::with_eta(1e-4),
            adam_d: AdamConfig::with_eta(1e-4),
            seed: 0,
        }
    }
}

impl CganConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam_g.validate()?;
        self.adam_d.validate()?;
        if self.batch_size == 0 {
            return Err(Error::invalid("cgan batch size must be positive"));
        }
        if !(self.cycle_weight >= 0.0) || !self.cycle_weight.is_finite() {
            return Err(Error::invalid(format!("cycle weight {} must be >= 0", self.cycle_weight)));
        }
        Ok(())
    }
}

/// The four networks.
#[derive(Clone, Debug, PartialEq)]
pub struct CganBundle {
    /// Observed domain to library domain.
    pub g_k: Model,
    /// Library domain to observed domain.
    pub g_s: Model,
    /// Discriminator on library-domain samples.
    pub d_k: Model,
    /// Discriminator on observed-domain samples.
    pub d_s: Model,
}

fn generator(from: &[usize], to: &[usize], cfg: &CganConfig, rng: &mut crate::Rng) -> Result<Model> {
    let n_from: usize = from.iter().product();
    let n_to: usize = to.iter().product();
    let b = ModelBuilder::new(from).flatten();
    let b = match cfg.generator {
        GeneratorArch::Linear if cfg.identity_init && n_from == n_to => b.layer(Layer::dense_identity(n_to)),
        GeneratorArch::Linear => b.dense(n_to, rng),
        GeneratorArch::Mlp { hidden } => b.dense(hidden, rng).tanh().dense(n_to, rng),
    };
    b.reshape(to).build()
}

fn discriminator(shape: &[usize], hidden: usize, rng: &mut crate::Rng) -> Result<Model> {
    let mut b = ModelBuilder::new(shape).flatten();
    if hidden > 0 {
        b = b.dense(hidden, rng).relu();
    }
    b.dense(1, rng).sigmoid().build()
}

impl CganBundle {
    /// Fresh networks for library samples of `lib_shape` and observed
    /// samples of `obs_shape`.
    pub fn init(lib_shape: &[usize], obs_shape: &[usize], cfg: &CganConfig) -> Result<Self> {
        let mut rng = seeded_rng(cfg.seed);
        let bundle = Self {
            g_k: generator(obs_shape, lib_shape, cfg, &mut rng)?,
            g_s: generator(lib_shape, obs_shape, cfg, &mut rng)?,
            d_k: discriminator(lib_shape, cfg.disc_hidden, &mut rng)?,
            d_s: discriminator(obs_shape, cfg.disc_hidden, &mut rng)?,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn validate(&self) -> Result<()> {
        let lib = self.d_k.input_shape();
        let obs = self.d_s.input_shape();
        if self.g_k.input_shape() != obs || self.g_k.output_shape() != lib {
            return Err(Error::shape("G_K must map observed samples to library samples"));
        }
        if self.g_s.input_shape() != lib || self.g_s.output_shape() != obs {
            return Err(Error::shape("G_S must map library samples to observed samples"));
        }
        for (name, d) in [("D_K", &self.d_k), ("D_S", &self.d_s)] {
            if d.output_len() != 1 || d.layers().last().map(Layer::kind) != Some(crate::tensor_nn::LayerKind::Sigmoid) {
                return Err(Error::invalid(format!("{name} must end in a sigmoid producing one probability")));
            }
        }
        Ok(())
    }

    /// `CGAN` then the model blobs of `G_K`, `G_S`, `D_K`, `D_S`, each
    /// preceded by its byte length (u32 LE).
    pub fn encode(&self) -> Vec<u8> {
        let mut out = BUNDLE_MAGIC.to_vec();
        for m in [&self.g_k, &self.g_s, &self.d_k, &self.d_s] {
            let blob = encode_model(m);
            out.extend_from_slice(&(blob.len() as u32).to_le_bytes());
            out.extend_from_slice(&blob);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut rest = bytes
            .strip_prefix(BUNDLE_MAGIC.as_slice())
            .ok_or_else(|| Error::format("bad bundle magic"))?;
        let mut models = Vec::with_capacity(4);
        for _ in 0..4 {
            let (len, tail) = rest
                .split_first_chunk::<4>()
                .ok_or_else(|| Error::format("bundle truncated"))?;
            let len = u32::from_le_bytes(*len) as usize;
            if tail.len() < len {
                return Err(Error::format("bundle truncated"));
            }
            models.push(decode_model(&tail[..len])?);
            rest = &tail[len..];
        }
        if !rest.is_empty() {
            return Err(Error::format("trailing bytes after bundle"));
        }
        let mut it = models.into_iter();
        let mut next = || it.next().expect("four models");
        let bundle = Self {
            g_k: next(),
            g_s: next(),
            d_k: next(),
            d_s: next(),
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn library_shape(&self) -> &[usize] {
        self.d_k.input_shape()
    }

    pub fn observed_shape(&self) -> &[usize] {
        self.d_s.input_shape()
    }
}

fn check_probs(p: &Tensor) -> Result<()> {
    if p.data().iter().any(|v| v.is_nan() || !(0.0..=1.0).contains(v)) {
        return Err(Error::NonFinite("discriminator output outside [0, 1]".into()));
    }
    Ok(())
}

/// `mean log p` and its gradient with respect to `p`, after clamping.
pub(crate) fn mean_log(p: &Tensor) -> Result<(f64, Tensor)> {
    check_probs(p)?;
    let n = p.len() as f64;
    let c = p.map(|v| v.clamp(PROB_EPS, 1.0 - PROB_EPS));
    Ok((c.data().iter().map(|v| v.ln()).sum::<f64>() / n, c.map(|v| 1.0 / (v * n))))
}

/// `mean log(1 - p)` and its gradient with respect to `p`, after clamping.
pub(crate) fn mean_log_one_minus(p: &Tensor) -> Result<(f64, Tensor)> {
    check_probs(p)?;
    let n = p.len() as f64;
    let c = p.map(|v| v.clamp(PROB_EPS, 1.0 - PROB_EPS));
    Ok((c.data().iter().map(|v| (1.0 - v).ln()).sum::<f64>() / n, c.map(|v| -1.0 / ((1.0 - v) * n))))
}

/// Adversarial loss `mean log D(real) + mean log(1 - D(G(source)))`.
pub fn gan_loss(g: &Model, d: &Model, real: &Tensor, source: &Tensor) -> Result<f64> {
    let (a, _) = mean_log(&d.infer(real)?)?;
    let (b, _) = mean_log_one_minus(&d.infer(&g.infer(source)?)?)?;
    Ok(a + b)
}

/// The two cycle terms `(mean |G_K(G_S(K)) - K|, mean |G_S(G_K(S)) - S|)`.
pub fn cycle_terms(g_k: &Model, g_s: &Model, k: &Tensor, s: &Tensor) -> Result<(f64, f64)> {
    if k.is_empty() || s.is_empty() {
        return Err(Error::invalid("cycle loss needs non-empty batches"));
    }
    let k_cycle = l1_loss(&g_k.infer(&g_s.infer(k)?)?, k)?.value;
    let s_cycle = l1_loss(&g_s.infer(&g_k.infer(s)?)?, s)?.value;
    Ok((k_cycle, s_cycle))
}

/// Cycle reconstruction loss, mean absolute error in both directions.
pub fn cycle_loss(g_k: &Model, g_s: &Model, k: &Tensor, s: &Tensor) -> Result<f64> {
    let (a, b) = cycle_terms(g_k, g_s, k, s)?;
    Ok(a + b)
}

/// Objective terms on one pair of batches.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CganLosses {
    /// `L_gan(G_S, D_S)` with real observed samples.
    pub gan_s: f64,
    /// `L_gan(G_K, D_K)` with real library samples.
    pub gan_k: f64,
    pub cycle: f64,
    /// `gan_s + gan_k + cycle_weight * cycle`.
    pub total: f64,
}

pub fn cgan_objective(b: &CganBundle, k: &Tensor, s: &Tensor, cycle_weight: f64) -> Result<CganLosses> {
    let gan_s = gan_loss(&b.g_s, &b.d_s, s, k)?;
    let gan_k = gan_loss(&b.g_k, &b.d_k, k, s)?;
    let cycle = cycle_loss(&b.g_k, &b.g_s, k, s)?;
    Ok(CganLosses {
        gan_s,
        gan_k,
        cycle,
        total: gan_s + gan_k + cycle_weight * cycle,
    })
}

/// Maps observed samples into the library domain. Deterministic.
pub fn adapt(g_k: &Model, s: &Tensor) -> Result<Tensor> {
    g_k.infer(s)
}

/// Adapts every image of an observed dataset, clamping to the `[0, 1]`
/// pixel range. Ground truth is carried over unchanged.
pub fn adapt_dataset(g_k: &Model, observed: &Dataset) -> Result<Dataset> {
    let out = adapt(g_k, &observed.all_images()?)?.map(|v| v.clamp(0.0, 1.0));
    let labels = match observed.labels() {
        crate::datasets_metrics::Labels::Masks(_) => crate::datasets_metrics::Labels::None,
        other => other.clone(),
    };
    Dataset::new(format!("{}_adapted", observed.name), out.unstack(), labels)
}

/// Fraction of correct real/fake calls by `d` (threshold 0.5).
pub fn discriminator_accuracy(d: &Model, real: &Tensor, fake: &Tensor) -> Result<f64> {
    let pr = d.infer(real)?;
    let pf = d.infer(fake)?;
    let hits = pr.data().iter().filter(|&&p| p >= 0.5).count() + pf.data().iter().filter(|&&p| p < 0.5).count();
    Ok(hits as f64 / (pr.len() + pf.len()) as f64)
}
