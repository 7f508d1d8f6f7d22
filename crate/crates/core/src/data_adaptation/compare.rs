use serde::{Deserialize, Serialize};

use super::train::{train_cgan, CganEpochStats};
use super::{adapt_dataset, CganBundle, CganConfig};
use crate::channel::{AwgnChannel, ChannelConfig};
use crate::datasets_metrics::{resample_dataset, Dataset};
use crate::semantic_coding::{
    metric_from_output, train_pragmatic, CoderArch, CoderPair, PragmaticTrainConfig, TaskKind,
};
use crate::split_protocol::{eval_channel_seed, run_training, SessionConfig, TransportKind};
use crate::tensor_nn::Model;
use crate::{seeded_rng, Error, Result};

/// Settings of the three-way comparison. `session.channel` is sized for
/// the library images; the retrained baseline keeps its compression rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DaEvalConfig {
    pub session: SessionConfig,
    #[serde(default = "default_arch")]
    pub coder_arch: CoderArch,
    #[serde(default)]
    pub pragmatic: PragmaticTrainConfig,
    #[serde(default)]
    pub cgan: CganConfig,
}

fn default_arch() -> CoderArch {
    CoderArch::Dense
}

impl DaEvalConfig {
    pub fn new(session: SessionConfig) -> Self {
        Self {
            session,
            coder_arch: default_arch(),
            pragmatic: PragmaticTrainConfig::default(),
            cgan: CganConfig::default(),
        }
    }
}

/// Task accuracy on the observed test set under each strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DaComparison {
    /// Observed data resampled to the library size, library coders and task.
    pub no_da: f64,
    /// Observed data mapped by the trained `G_K`, library coders and task.
    pub da: f64,
    /// Coders and task retrained on the observed data itself.
    pub retrained: f64,
    pub cgan_history: Vec<CganEpochStats>,
}

/// Sends every image of `data` through `pair` over a fresh evaluation
/// channel and scores `phi` on the reconstructions.
fn task_accuracy(pair: &CoderPair, phi: &Model, data: &Dataset, channel: &ChannelConfig) -> Result<f64> {
    let mut cfg = *channel;
    cfg.seed = eval_channel_seed(channel.seed);
    let mut ch = AwgnChannel::new(cfg)?;
    let k_hat = pair.reconstruct(&data.all_images()?, &mut ch)?;
    let all: Vec<usize> = (0..data.len()).collect();
    metric_from_output(&phi.infer(&k_hat)?, &data.targets(&all)?)
}

/// Trains task function and coders on `train` and scores them on `test`.
fn train_system(
    train: &Dataset,
    cfg: &DaEvalConfig,
    channel: ChannelConfig,
) -> Result<(CoderPair, Model)> {
    let phi = train_pragmatic(train, None, &cfg.pragmatic)?.model;
    let pair = CoderPair::init(
        &train.image_shape(),
        channel.n_x,
        cfg.coder_arch,
        TaskKind::Discrete,
        &mut seeded_rng(cfg.session.seed),
    )?;
    let mut session = cfg.session.clone();
    session.channel = channel;
    session.evaluate = false;
    let out = run_training(pair, Some(phi.clone()), train, None, &session, &TransportKind::InProcess)
        .map_err(|e| e.source)?;
    Ok((out.pair, phi))
}

/// Compares no adaptation, adaptation through a trained `G_K`, and full
/// retraining. `library` and `observed_train` carry class labels; the
/// adaptation itself never reads observed labels, only the retrained
/// baseline does.
pub fn compare_adaptation(
    library: &Dataset,
    observed_train: &Dataset,
    observed_test: &Dataset,
    cfg: &DaEvalConfig,
) -> Result<DaComparison> {
    if library.class_labels().is_none() || observed_test.class_labels().is_none() {
        return Err(Error::invalid("data adaptation comparison needs class labels"));
    }
    let lib_shape = library.image_shape();
    let obs_shape = observed_train.image_shape();
    if observed_test.image_shape() != obs_shape {
        return Err(Error::shape("observed train and test images differ in shape"));
    }
    let [h, w, _] = lib_shape[..] else {
        return Err(Error::shape(format!("library images must be [h, w, c], got {lib_shape:?}")));
    };

    let (lib_pair, lib_phi) = train_system(library, cfg, cfg.session.channel)?;

    let resized = resample_dataset(observed_test, h, w)?;
    let no_da = task_accuracy(&lib_pair, &lib_phi, &resized, &cfg.session.channel)?;

    let bundle = CganBundle::init(&lib_shape, &obs_shape, &cfg.cgan)?;
    let cgan = train_cgan(bundle, &library.without_labels(), &observed_train.without_labels(), &cfg.cgan)?;
    let adapted = adapt_dataset(&cgan.bundle.g_k, observed_test)?;
    let da = task_accuracy(&lib_pair, &lib_phi, &adapted, &cfg.session.channel)?;

    let n_k = observed_train.image_len();
    let cr = cfg.session.channel.compression_rate();
    let n_x = ((cr * n_k as f64).round() as usize).clamp(1, n_k);
    let mut obs_channel = cfg.session.channel;
    obs_channel.n_k = n_k;
    obs_channel.n_x = n_x;
    let (obs_pair, obs_phi) = train_system(observed_train, cfg, obs_channel)?;
    let retrained = task_accuracy(&obs_pair, &obs_phi, observed_test, &obs_channel)?;

    log::info!("no DA {no_da:.3}, DA {da:.3}, retrained {retrained:.3}");
    Ok(DaComparison {
        no_da,
        da,
        retrained,
        cgan_history: cgan.history,
    })
}
