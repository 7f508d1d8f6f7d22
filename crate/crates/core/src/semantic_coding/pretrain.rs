use serde::{Deserialize, Serialize};

use super::CoderPair;
use crate::channel::{AwgnChannel, ChannelConfig};
use crate::datasets_metrics::{epoch_batches, Dataset};
use crate::tensor_nn::{encode_model, mse_loss, AdamConfig, AdamState, Tensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub pair: CoderPair,
    /// Encoder parameters ready to hand to the transmitter.
    pub encoder_blob: Vec<u8>,
    /// Reconstruction MSE on the training set before and after, measured
    /// with the same noise realisation.
    pub initial_loss: f64,
    pub final_loss: f64,
}

fn reconstruction_loss(pair: &CoderPair, k: &Tensor, channel: &ChannelConfig) -> Result<f64> {
    let mut ch = AwgnChannel::new(*channel)?;
    Ok(mse_loss(&pair.reconstruct(k, &mut ch)?, k)?.value)
}

/// Receiver-local pretraining of both coders on reconstruction alone.
/// The channel is simulated locally; nothing is exchanged except the
/// returned encoder blob.
pub fn pretrain_reconstruction(
    mut pair: CoderPair,
    data: &Dataset,
    channel: &ChannelConfig,
    cfg: &PretrainConfig,
) -> Result<PretrainOutcome> {
    if data.is_empty() {
        return Err(Error::invalid("empty pretraining set"));
    }
    if data.image_shape() != pair.source_shape() {
        return Err(Error::shape(format!(
            "dataset images {:?} vs coder source {:?}",
            data.image_shape(),
            pair.source_shape()
        )));
    }
    let all = data.all_images()?;
    let initial_loss = reconstruction_loss(&pair, &all, channel)?;
    let mut ch = AwgnChannel::new(*channel)?;
    let mut enc_opt = AdamState::new(cfg.adam)?;
    let mut dec_opt = AdamState::new(cfg.adam)?;
    for epoch in 0..cfg.epochs {
        let seed = cfg.seed.wrapping_add(epoch as u64);
        for idx in epoch_batches(data.len(), cfg.batch_size, seed) {
            let k = data.batch(&idx)?;
            pair.encoder.zero_grad();
            pair.decoder.zero_grad();
            let x = pair.encoder.forward(&k)?;
            let y = ch.transmit(&x)?;
            let k_hat = pair.decoder.forward(&y)?;
            let loss = mse_loss(&k_hat, &k)?;
            let grad_y = pair.decoder.backward(&loss.grad)?;
            pair.encoder.backward(&grad_y)?;
            dec_opt.step_model(&mut pair.decoder)?;
            enc_opt.step_model(&mut pair.encoder)?;
        }
    }
    pair.encoder.clear_tape();
    pair.decoder.clear_tape();
    let final_loss = reconstruction_loss(&pair, &all, channel)?;
    Ok(PretrainOutcome {
        encoder_blob: encode_model(&pair.encoder),
        pair,
        initial_loss,
        final_loss,
    })
}
