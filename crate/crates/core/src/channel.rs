//! Power-normalized AWGN channel and compression-rate accounting.
//!
//! Channel symbols are continuous reals. Each sample is scaled to unit mean
//! symbol power before transmission, so a given SNR fixes the noise variance
//! at `10^(-snr_db / 10)`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::tensor_nn::Tensor;
use crate::{seeded_rng, Error, Result};

/// Channel parameters. `snr_db = +inf` selects the noiseless channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub snr_db: f64,
    /// Channel symbols per source item.
    pub n_x: usize,
    /// Source values per item.
    pub n_k: usize,
    pub seed: u64,
    /// Quantize symbols to 8 bits before the noise is added.
    #[serde(default)]
    pub quantize_8bit: bool,
}

impl ChannelConfig {
    pub fn new(snr_db: f64, n_x: usize, n_k: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            snr_db,
            n_x,
            n_k,
            seed,
            quantize_8bit: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn noiseless(n_x: usize, n_k: usize, seed: u64) -> Result<Self> {
        Self::new(f64::INFINITY, n_x, n_k, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_x == 0 || self.n_k == 0 || self.n_x > self.n_k {
            return Err(Error::invalid(format!(
                "channel needs 1 <= n_x <= n_k, got n_x={} n_k={}",
                self.n_x, self.n_k
            )));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::invalid(format!("snr_db must be a number or +inf, got {}", self.snr_db)));
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.snr_db == f64::INFINITY
    }

    /// `10^(-snr_db/10)` for unit signal power; zero when noiseless.
    pub fn noise_variance(&self) -> f64 {
        if self.is_noiseless() {
            0.0
        } else {
            10f64.powf(-self.snr_db / 10.0)
        }
    }

    pub fn compression_rate(&self) -> f64 {
        self.n_x as f64 / self.n_k as f64
    }
}

/// `n_x / n_k`: channel-input length over source length.
pub fn compression_rate(n_x: usize, n_k: usize) -> Result<f64> {
    if n_x == 0 || n_k == 0 {
        return Err(Error::invalid("compression rate needs positive dimensions"));
    }
    Ok(n_x as f64 / n_k as f64)
}

/// Scales every batch row to unit mean power: `x * sqrt(n) / ||x||`.
pub fn power_normalize(x: &Tensor) -> Result<Tensor> {
    if x.rank() < 2 {
        return Err(Error::shape("power_normalize expects a batch dimension"));
    }
    let n = x.sample_len() as f64;
    let mut out = x.clone();
    for i in 0..x.batch_size() {
        let row = out.sample_mut(i);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::NonFinite(format!(
                "power_normalize: sample {i} is all zeros"
            )));
        }
        let s = n.sqrt() / norm;
        row.iter_mut().for_each(|v| *v *= s);
    }
    Ok(out)
}

/// Vector-Jacobian product of [`power_normalize`] at `x`:
/// `sqrt(n)/||x|| * (g - x (x.g) / ||x||^2)` per row.
pub fn power_normalize_backward(x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    x.expect_same_shape(grad_out, "power_normalize_backward")?;
    let n = x.sample_len() as f64;
    let mut out = grad_out.clone();
    for i in 0..x.batch_size() {
        let xi = x.sample(i);
        let sq = xi.iter().map(|v| v * v).sum::<f64>();
        if sq == 0.0 {
            return Err(Error::NonFinite(format!(
                "power_normalize_backward: sample {i} is all zeros"
            )));
        }
        let norm = sq.sqrt();
        let dot: f64 = xi.iter().zip(grad_out.sample(i)).map(|(a, b)| a * b).sum();
        let s = n.sqrt() / norm;
        for (g, &xv) in out.sample_mut(i).iter_mut().zip(xi) {
            *g = s * (*g - xv * dot / sq);
        }
    }
    Ok(out)
}

/// Clip range of the optional 8-bit symbol quantizer.
pub const QUANT_RANGE: f64 = 4.0;

/// Uniform 256-level quantizer on `[-QUANT_RANGE, QUANT_RANGE]`. Its gradient
/// is treated as identity (straight-through).
pub fn quantize_8bit(x: &Tensor) -> Tensor {
    let step = 2.0 * QUANT_RANGE / 255.0;
    x.map(|v| {
        let c = v.clamp(-QUANT_RANGE, QUANT_RANGE);
        ((c + QUANT_RANGE) / step).round() * step - QUANT_RANGE
    })
}

/// `Y = X + N` with `N ~ N(0, 10^(-snr/10))` i.i.d., drawing from `rng`.
pub fn awgn_transmit<R: Rng + ?Sized>(x: &Tensor, cfg: &ChannelConfig, rng: &mut R) -> Result<Tensor> {
    x.check_finite("channel input")?;
    let x = if cfg.quantize_8bit {
        quantize_8bit(x)
    } else {
        x.clone()
    };
    if cfg.is_noiseless() {
        return Ok(x);
    }
    let normal = Normal::new(0.0, cfg.noise_variance().sqrt())
        .map_err(|e| Error::invalid(format!("noise distribution: {e}")))?;
    let mut y = x;
    for v in y.data_mut() {
        *v += normal.sample(rng);
    }
    Ok(y)
}

/// A channel instance owning its seeded noise generator.
#[derive(Clone, Debug)]
pub struct AwgnChannel {
    cfg: ChannelConfig,
    rng: ChaCha8Rng,
}

impl AwgnChannel {
    pub fn new(cfg: ChannelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            rng: seeded_rng(cfg.seed),
            cfg,
        })
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.cfg
    }

    pub fn transmit(&mut self, x: &Tensor) -> Result<Tensor> {
        awgn_transmit(x, &self.cfg, &mut self.rng)
    }
}
