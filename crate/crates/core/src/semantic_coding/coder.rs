use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TaskKind;
use crate::channel::{compression_rate, AwgnChannel};
use crate::tensor_nn::{LayerKind, Model, ModelBuilder, Tensor};
use crate::{Error, Result};

/// Layer layout of a freshly initialised coder pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
pub enum CoderArch {
    /// One fully connected layer each way.
    Dense,
    /// Encoder: strided conv (stride 2, same padding), flatten, dense.
    /// Decoder: dense. Assumes channel-last images with one channel.
    Conv { channels: usize, kernel: usize },
}

/// Encoder `f` (transmitter side) and decoder `g` (receiver side).
#[derive(Clone, Debug, PartialEq)]
pub struct CoderPair {
    pub encoder: Model,
    pub decoder: Model,
    pub cr: f64,
    pub task_kind: TaskKind,
}

impl CoderPair {
    /// Validates dimensions and the activation-free layout.
    pub fn new(encoder: Model, decoder: Model, task_kind: TaskKind) -> Result<Self> {
        let n_k: usize = encoder.input_shape().iter().product();
        let cr = compression_rate(encoder.output_len(), n_k)?;
        if cr > 1.0 {
            return Err(Error::invalid(format!("n_x = {} exceeds source length {n_k}", encoder.output_len())));
        }
        let pair = Self {
            encoder,
            decoder,
            cr,
            task_kind,
        };
        pair.validate()?;
        Ok(pair)
    }

    /// Builds a pair for sources of shape `source_shape` and channel
    /// dimension `n_x`.
    pub fn init(
        source_shape: &[usize],
        n_x: usize,
        arch: CoderArch,
        task_kind: TaskKind,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let n_k: usize = source_shape.iter().product();
        compression_rate(n_x, n_k)?;
        let encoder = match arch {
            CoderArch::Dense => ModelBuilder::new(source_shape).flatten().dense(n_x, rng).power_norm().build()?,
            CoderArch::Conv { channels, kernel } => {
                let [h, w, c] = source_shape else {
                    return Err(Error::shape(format!("conv coder needs [h, w, c], got {source_shape:?}")));
                };
                ModelBuilder::new(source_shape)
                    .reshape(&[*c, *h, *w])
                    .conv2d(channels, kernel, 2, kernel / 2, rng)
                    .flatten()
                    .dense(n_x, rng)
                    .power_norm()
                    .build()?
            }
        };
        let decoder = ModelBuilder::new(&[n_x]).dense(n_k, rng).reshape(source_shape).build()?;
        Self::new(encoder, decoder, task_kind)
    }

    pub fn n_x(&self) -> usize {
        self.encoder.output_len()
    }

    pub fn source_shape(&self) -> &[usize] {
        self.encoder.input_shape()
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder.output_shape().len() != 1 {
            return Err(Error::shape(format!(
                "encoder output must be a vector, got {:?}",
                self.encoder.output_shape()
            )));
        }
        if self.decoder.input_shape() != [self.n_x()] {
            return Err(Error::shape(format!(
                "decoder input {:?} does not match n_x = {}",
                self.decoder.input_shape(),
                self.n_x()
            )));
        }
        if self.decoder.output_shape() != self.source_shape() {
            return Err(Error::shape(format!(
                "decoder output {:?} differs from source {:?}",
                self.decoder.output_shape(),
                self.source_shape()
            )));
        }
        let enc = self.encoder.kinds();
        if enc.last() != Some(&LayerKind::PowerNorm) {
            return Err(Error::invalid("encoder must end with power_norm"));
        }
        let enc_body = &enc[..enc.len() - 1];
        let bad = enc_body
            .iter()
            .chain(self.decoder.kinds().iter())
            .any(|k| k.is_activation() || *k == LayerKind::PowerNorm);
        if bad {
            return Err(Error::invalid("coder layers must not contain activations"));
        }
        Ok(())
    }

    /// Encode, transmit and decode without recording gradients.
    pub fn reconstruct(&self, k: &Tensor, channel: &mut AwgnChannel) -> Result<Tensor> {
        let x = self.encoder.infer(k)?;
        let y = channel.transmit(&x)?;
        self.decoder.infer(&y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ChannelConfig;
    use crate::seeded_rng;

    #[test]
    fn dense_and_conv_pairs_validate() {
        let mut rng = seeded_rng(0);
        for arch in [CoderArch::Dense, CoderArch::Conv { channels: 2, kernel: 3 }] {
            let p = CoderPair::init(&[8, 8, 1], 16, arch, TaskKind::Discrete, &mut rng).unwrap();
            assert_eq!(p.n_x(), 16);
            assert_eq!(p.cr, 0.25);
            let mut ch = AwgnChannel::new(ChannelConfig::noiseless(16, 64, 0).unwrap()).unwrap();
            let out = p.reconstruct(&Tensor::zeros(&[2, 8, 8, 1]).map(|_| 0.5), &mut ch).unwrap();
            assert_eq!(out.shape(), &[2, 8, 8, 1]);
        }
    }

    #[test]
    fn activations_rejected() {
        let mut rng = seeded_rng(0);
        let enc = ModelBuilder::new(&[4]).dense(2, &mut rng).relu().power_norm().build().unwrap();
        let dec = ModelBuilder::new(&[2]).dense(4, &mut rng).build().unwrap();
        assert!(CoderPair::new(enc, dec, TaskKind::Discrete).is_err());
    }

    #[test]
    fn n_x_above_n_k_rejected() {
        let mut rng = seeded_rng(0);
        assert!(CoderPair::init(&[2], 3, CoderArch::Dense, TaskKind::Discrete, &mut rng).is_err());
    }
}
