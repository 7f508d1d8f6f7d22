use std::net::TcpListener;
use std::thread;

use serde::{Deserialize, Serialize};

use super::receiver::{EpochMetrics, LeadOptions, Receiver};
use super::transmitter::{Transmitter, TransmitterOutcome};
use super::transport::{duplex_pipe, tcp_accept, tcp_connect, FramedLink};
use super::wire::WirePrecision;
use crate::channel::ChannelConfig;
use crate::datasets_metrics::Dataset;
use crate::semantic_coding::{lambda_s, CoderPair, LossConfig, Pragmatic};
use crate::tensor_nn::{encode_model, AdamConfig};
use crate::{Error, Result};

/// Failure of one endpoint, with the newest parameters that completed an
/// epoch.
#[derive(Debug, thiserror::Error)]
#[error("session aborted (last completed epoch {last_good_epoch:?}): {source}")]
pub struct SessionError {
    #[source]
    pub source: Error,
    pub last_good_epoch: Option<u32>,
    /// Parameter blob of the failing endpoint's model after that epoch.
    pub checkpoint: Option<Vec<u8>>,
}

impl SessionError {
    pub(crate) fn new(source: Error, last_good: Option<(u32, Vec<u8>)>) -> Self {
        let (last_good_epoch, checkpoint) = match last_good {
            Some((e, blob)) => (Some(e), Some(blob)),
            None => (None, None),
        };
        Self {
            source,
            last_good_epoch,
            checkpoint,
        }
    }
}

impl From<Error> for SessionError {
    fn from(source: Error) -> Self {
        Self::new(source, None)
    }
}

/// When to stop training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StopConfig {
    pub max_epochs: usize,
    /// Stop after this many epochs without an improvement of at least
    /// `min_improvement` in training loss; 0 disables early stopping.
    pub patience: usize,
    pub min_improvement: f64,
}

impl Default for StopConfig {
    fn default() -> Self {
        Self {
            max_epochs: 200,
            patience: 10,
            min_improvement: 1e-5,
        }
    }
}

/// Everything both endpoints agree on before a session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub channel: ChannelConfig,
    /// Defaults to `1 - cr`.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Fixed `alpha`; `None` calibrates it on the first batch.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub stop: StopConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub precision: WirePrecision,
    #[serde(default = "default_true")]
    pub evaluate: bool,
    /// Ship the receiver's encoder to the transmitter before training.
    #[serde(default)]
    pub send_encoder_params: bool,
}

fn default_batch_size() -> usize {
    32
}

fn default_true() -> bool {
    true
}

impl SessionConfig {
    pub fn new(channel: ChannelConfig) -> Self {
        Self {
            channel,
            lambda: None,
            alpha: None,
            adam: AdamConfig::default(),
            batch_size: default_batch_size(),
            stop: StopConfig::default(),
            seed: 0,
            precision: WirePrecision::F32,
            evaluate: true,
            send_encoder_params: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.adam.validate()?;
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        if let Some(l) = self.lambda {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::invalid(format!("lambda {l} outside [0, 1]")));
            }
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::invalid(format!("alpha {a} must be positive")));
            }
        }
        Ok(())
    }

    pub fn lead_options(&self, initial_encoder: Option<Vec<u8>>) -> LeadOptions {
        LeadOptions {
            batch_size: self.batch_size,
            seed: self.seed,
            stop: self.stop,
            evaluate: self.evaluate,
            initial_encoder,
        }
    }

    /// The loss weights the receiver starts with.
    pub fn loss_config(&self, pair: &CoderPair) -> Result<LossConfig> {
        let lambda = match self.lambda {
            Some(l) => l,
            None => lambda_s(pair.cr)?,
        };
        LossConfig::new(lambda, self.alpha.unwrap_or(1.0), pair.task_kind)
    }
}

/// Byte stream used between the two endpoints of [`run_training`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "transport", rename_all = "snake_case")]
pub enum TransportKind {
    #[default]
    InProcess,
    /// Loopback TCP on `addr` (port 0 picks a free port).
    Tcp { addr: String },
}

/// Result of a complete session run with both endpoints in this process.
#[derive(Debug)]
pub struct TrainingOutcome<P> {
    pub pair: CoderPair,
    pub phi: Option<P>,
    pub loss: LossConfig,
    pub metrics: Vec<EpochMetrics>,
    pub stopped_early: bool,
    pub transmitter: TransmitterOutcome,
}

/// Shuffle seed announced by the receiver for `epoch`.
pub fn shuffle_seed(seed: u64, epoch: u32) -> u64 {
    seed ^ (u64::from(epoch) + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Seed of the separate channel instance used for evaluation batches, so
/// evaluation never perturbs the training noise sequence.
pub fn eval_channel_seed(seed: u64) -> u64 {
    seed ^ 0xD1B5_4A32_D192_ED03
}

/// Runs a full session with the transmitter on a worker thread and the
/// receiver on the calling thread. `train`/`test` hold the library images
/// with their ground truth; the transmitter is only given the images.
pub fn run_training<P: Pragmatic>(
    pair: CoderPair,
    phi: Option<P>,
    train: &Dataset,
    test: Option<&Dataset>,
    cfg: &SessionConfig,
    transport: &TransportKind,
) -> Result<TrainingOutcome<P>, SessionError> {
    cfg.validate()?;
    pair.validate()?;
    if cfg.channel.n_x != pair.n_x() || cfg.channel.n_k != pair.source_shape().iter().product::<usize>() {
        return Err(Error::invalid(format!(
            "channel dimensions {}/{} do not match coders {}/{:?}",
            cfg.channel.n_x,
            cfg.channel.n_k,
            pair.n_x(),
            pair.source_shape()
        ))
        .into());
    }
    let loss = cfg.loss_config(&pair)?;
    let task_kind = pair.task_kind;
    let initial = cfg.send_encoder_params.then(|| encode_model(&pair.encoder));
    let transmitter = Transmitter::new(
        pair.encoder,
        cfg.channel,
        cfg.adam,
        train.images().to_vec(),
        test.map(|t| t.images().to_vec()).unwrap_or_default(),
        cfg.precision,
    )?;
    let receiver = Receiver::new(
        pair.decoder,
        phi,
        loss,
        cfg.alpha.is_none(),
        cfg.adam,
        train.clone(),
        test.cloned(),
    )?;
    let opts = cfg.lead_options(initial);
    let precision = cfg.precision;

    let (rx_result, tx_result) = match transport {
        TransportKind::InProcess => {
            let (a, b) = duplex_pipe();
            let handle = thread::spawn(move || transmitter.serve(FramedLink::new(b, precision)));
            let rx = receiver.lead(FramedLink::new(a, precision), &opts);
            (rx, join(handle))
        }
        TransportKind::Tcp { addr } => {
            let listener = TcpListener::bind(addr.as_str()).map_err(Error::from)?;
            let local = listener.local_addr().map_err(Error::from)?;
            let handle = thread::spawn(move || {
                let stream = tcp_connect(local, 20)?;
                transmitter.serve(FramedLink::new(stream, precision))
            });
            let rx = match tcp_accept(&listener) {
                Ok(stream) => receiver.lead(FramedLink::new(stream, precision), &opts),
                Err(e) => Err(e.into()),
            };
            (rx, join(handle))
        }
    };
    let rx = rx_result?;
    let tx = tx_result?;
    Ok(TrainingOutcome {
        pair: CoderPair::new(tx.encoder.clone(), rx.decoder, task_kind)?,
        phi: rx.phi,
        loss: rx.loss,
        metrics: rx.metrics,
        stopped_early: rx.stopped_early,
        transmitter: tx,
    })
}

fn join(
    handle: thread::JoinHandle<Result<TransmitterOutcome, SessionError>>,
) -> Result<TransmitterOutcome, SessionError> {
    handle
        .join()
        .unwrap_or_else(|_| Err(Error::protocol("transmitter thread panicked").into()))
}
