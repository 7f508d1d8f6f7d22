//! Transmitter endpoint: holds the encoder and the observable images only.

use std::io::{Read, Write};

use super::message::{Control, ControlOp, DataBatch, FeedbackMessage, MetricsReport, ProtocolMessage};
use super::session::{eval_channel_seed, SessionError};
use super::transport::FramedLink;
use super::wire::WirePrecision;
use crate::channel::{AwgnChannel, ChannelConfig};
use crate::datasets_metrics::{epoch_batches, sequential_batches};
use crate::tensor_nn::{decode_model, encode_model, AdamConfig, AdamState, Model, Tape, Tensor};
use crate::{Error, Result};

#[derive(Debug)]
struct Pending {
    epoch: u32,
    batch_id: u32,
    tape: Tape,
    y: Tensor,
}

#[derive(Debug)]
pub struct Transmitter {
    encoder: Model,
    adam_cfg: AdamConfig,
    adam: AdamState,
    channel: AwgnChannel,
    eval_channel: AwgnChannel,
    train: Vec<Tensor>,
    eval: Vec<Tensor>,
    precision: WirePrecision,
    pending: Option<Pending>,
    reports: Vec<MetricsReport>,
    last_good: Option<(u32, Vec<u8>)>,
}

/// What the transmitter ends a session with.
#[derive(Clone, Debug)]
pub struct TransmitterOutcome {
    pub encoder: Model,
    pub reports: Vec<MetricsReport>,
    pub bytes_sent: u64,
    pub bytes_received: u64,
}

impl Transmitter {
    /// `train` and `eval` are per-sample source tensors matching the
    /// encoder input shape.
    pub fn new(
        encoder: Model,
        channel: ChannelConfig,
        adam: AdamConfig,
        train: Vec<Tensor>,
        eval: Vec<Tensor>,
        precision: WirePrecision,
    ) -> Result<Self> {
        check_encoder(&encoder, &channel)?;
        for t in train.iter().chain(&eval) {
            if t.shape() != encoder.input_shape() {
                return Err(Error::shape(format!(
                    "source sample {:?} does not match encoder input {:?}",
                    t.shape(),
                    encoder.input_shape()
                )));
            }
        }
        let mut eval_cfg = channel;
        eval_cfg.seed = eval_channel_seed(channel.seed);
        Ok(Self {
            encoder,
            adam_cfg: adam,
            adam: AdamState::new(adam)?,
            channel: AwgnChannel::new(channel)?,
            eval_channel: AwgnChannel::new(eval_cfg)?,
            train,
            eval,
            precision,
            pending: None,
            reports: Vec::new(),
            last_good: None,
        })
    }

    pub fn encoder(&self) -> &Model {
        &self.encoder
    }

    pub fn reports(&self) -> &[MetricsReport] {
        &self.reports
    }

    /// Replaces the encoder with one received as a parameter blob and
    /// restarts the optimizer.
    pub fn load_encoder(&mut self, blob: &[u8]) -> Result<()> {
        let encoder = decode_model(blob)?;
        check_encoder(&encoder, self.channel.config())?;
        if encoder.input_shape() != self.encoder.input_shape() {
            return Err(Error::shape(format!(
                "received encoder expects {:?}, sources are {:?}",
                encoder.input_shape(),
                self.encoder.input_shape()
            )));
        }
        self.encoder = encoder;
        self.adam = AdamState::new(self.adam_cfg)?;
        Ok(())
    }

    /// Encodes `k`, passes it through the channel and caches the forward
    /// activations until the matching feedback arrives.
    pub fn send_batch(&mut self, epoch: u32, batch_id: u32, k: &Tensor) -> Result<DataBatch> {
        if self.pending.is_some() {
            return Err(Error::protocol("previous batch still awaits feedback"));
        }
        let (x, tape) = self.encoder.forward_traced(k)?;
        let y = self.precision.quantize(&self.channel.transmit(&x)?);
        self.pending = Some(Pending {
            epoch,
            batch_id,
            tape,
            y: y.clone(),
        });
        Ok(DataBatch {
            epoch,
            batch_id,
            y,
            eval: false,
        })
    }

    /// Encodes an evaluation batch; nothing is cached.
    pub fn send_eval_batch(&mut self, epoch: u32, batch_id: u32, k: &Tensor) -> Result<DataBatch> {
        let x = self.encoder.infer(k)?;
        let y = self.precision.quantize(&self.eval_channel.transmit(&x)?);
        Ok(DataBatch {
            epoch,
            batch_id,
            y,
            eval: true,
        })
    }

    /// Chains the per-sample `grad_Y` with the cached forward pass, averages
    /// over the batch and takes one Adam step. The channel has unit
    /// Jacobian, so `grad_X = grad_Y`.
    pub fn apply_feedback(&mut self, fb: &FeedbackMessage) -> Result<()> {
        let pending = self
            .pending
            .take()
            .ok_or_else(|| Error::protocol("feedback without an outstanding batch"))?;
        if (fb.epoch, fb.batch_id) != (pending.epoch, pending.batch_id) {
            return Err(Error::protocol(format!(
                "feedback for epoch {} batch {} but epoch {} batch {} is outstanding",
                fb.epoch, fb.batch_id, pending.epoch, pending.batch_id
            )));
        }
        if fb.y != pending.y {
            return Err(Error::protocol("feedback Y differs from the Y that was sent"));
        }
        let b = pending.y.batch_size() as f64;
        let grad_x = fb.grad_y.scale(1.0 / b);
        self.encoder.zero_grad();
        self.encoder.backward_traced(&pending.tape, &grad_x)?;
        self.adam.step_model(&mut self.encoder)
    }

    fn stack(items: &[Tensor], idx: &[usize]) -> Result<Tensor> {
        Tensor::stack(&idx.iter().map(|&i| items[i].clone()).collect::<Vec<_>>())
    }

    fn run_pass<S: Read + Write>(&mut self, link: &mut FramedLink<S>, c: Control) -> Result<()> {
        let batch_size = c.batch_size as usize;
        if batch_size == 0 {
            return Err(Error::protocol("start with batch size 0"));
        }
        if c.eval {
            for (i, idx) in sequential_batches(self.eval.len(), batch_size).iter().enumerate() {
                let k = Self::stack(&self.eval, idx)?;
                let m = self.send_eval_batch(c.epoch, i as u32, &k)?;
                link.send(&ProtocolMessage::DataBatch(m))?;
            }
        } else {
            for (i, idx) in epoch_batches(self.train.len(), batch_size, c.shuffle_seed).iter().enumerate() {
                let k = Self::stack(&self.train, idx)?;
                let m = self.send_batch(c.epoch, i as u32, &k)?;
                link.send(&ProtocolMessage::DataBatch(m))?;
                match link.recv()? {
                    ProtocolMessage::Feedback(fb) => self.apply_feedback(&fb)?,
                    other => {
                        return Err(Error::protocol(format!("expected Feedback, got {}", other.name())));
                    }
                }
            }
            self.last_good = Some((c.epoch, encode_model(&self.encoder)));
        }
        link.send(&ProtocolMessage::Control(Control::stop_epoch(c.epoch, c.eval)))
    }

    fn serve_inner<S: Read + Write>(&mut self, link: &mut FramedLink<S>) -> Result<()> {
        loop {
            match link.recv()? {
                ProtocolMessage::EncoderParams(blob) => self.load_encoder(&blob)?,
                ProtocolMessage::Control(c) => match c.op {
                    ControlOp::Start => self.run_pass(link, c)?,
                    ControlOp::Shutdown => return Ok(()),
                    ControlOp::StopEpoch => return Err(Error::protocol("unexpected StopEpoch")),
                },
                ProtocolMessage::MetricsReport(r) => {
                    log::info!("epoch {} report received", r.epoch);
                    self.reports.push(r);
                }
                other => return Err(Error::protocol(format!("unexpected {}", other.name()))),
            }
        }
    }

    /// Follows the receiver's lead until Shutdown.
    pub fn serve<S: Read + Write>(mut self, mut link: FramedLink<S>) -> Result<TransmitterOutcome, SessionError> {
        match self.serve_inner(&mut link) {
            Ok(()) => Ok(TransmitterOutcome {
                encoder: self.encoder,
                reports: self.reports,
                bytes_sent: link.bytes_sent(),
                bytes_received: link.bytes_received(),
            }),
            Err(source) => Err(SessionError::new(source, self.last_good)),
        }
    }
}

fn check_encoder(encoder: &Model, channel: &ChannelConfig) -> Result<()> {
    if encoder.output_len() != channel.n_x || encoder.input_len() != channel.n_k {
        return Err(Error::shape(format!(
            "encoder maps {} -> {} values, channel expects {} -> {}",
            encoder.input_len(),
            encoder.output_len(),
            channel.n_k,
            channel.n_x
        )));
    }
    Ok(())
}
