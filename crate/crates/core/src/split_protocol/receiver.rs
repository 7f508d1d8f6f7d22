//! Receiver endpoint: decoder, task function and ground truth. It leads
//! the session.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::message::{Control, ControlOp, DataBatch, FeedbackMessage, MetricsReport, ProtocolMessage};
use super::session::{shuffle_seed, SessionError, StopConfig};
use super::transport::FramedLink;
use crate::datasets_metrics::{epoch_batches, psnr, sequential_batches, Dataset, Labels, Targets};
use crate::semantic_coding::{
    calibrate_alpha, distortion_components, metric_from_output, LossConfig, Pragmatic, SemanticLoss,
};
use crate::tensor_nn::{encode_model, AdamConfig, AdamState, Model, Tensor};
use crate::{Error, Result};

/// Per-epoch log line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: u32,
    /// Batch-size-weighted mean training loss before each update.
    pub train_esd: f64,
    pub train_d_ob: f64,
    pub train_d_pr: Option<f64>,
    pub test_psnr: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub test_iou: Option<f64>,
}

impl EpochMetrics {
    pub fn report(&self) -> MetricsReport {
        MetricsReport {
            epoch: self.epoch,
            esd: self.train_esd,
            accuracy: self.test_accuracy,
            psnr: self.test_psnr,
            iou: self.test_iou,
        }
    }
}

/// Session schedule chosen by the receiver.
#[derive(Clone, Debug, PartialEq)]
pub struct LeadOptions {
    pub batch_size: usize,
    pub seed: u64,
    pub stop: StopConfig,
    /// Run an evaluation pass after every epoch (needs a test set).
    pub evaluate: bool,
    /// Parameters to hand to the transmitter before the first epoch.
    pub initial_encoder: Option<Vec<u8>>,
}

#[derive(Debug)]
pub struct ReceiverOutcome<P> {
    pub decoder: Model,
    pub phi: Option<P>,
    /// Loss weights actually used (after any calibration).
    pub loss: LossConfig,
    pub metrics: Vec<EpochMetrics>,
    pub stopped_early: bool,
    pub bytes_sent: u64,
    pub bytes_received: u64,
}

#[derive(Debug)]
pub struct Receiver<P> {
    decoder: Model,
    phi: Option<P>,
    adam: AdamState,
    loss: LossConfig,
    calibrate: bool,
    train: Dataset,
    test: Option<Dataset>,
    last_good: Option<(u32, Vec<u8>)>,
}

impl<P: Pragmatic> Receiver<P> {
    /// `calibrate_alpha` replaces `loss.alpha` with the ratio of the two
    /// terms on the first training batch.
    pub fn new(
        decoder: Model,
        phi: Option<P>,
        loss: LossConfig,
        calibrate_alpha: bool,
        adam: AdamConfig,
        train: Dataset,
        test: Option<Dataset>,
    ) -> Result<Self> {
        loss.validate()?;
        for d in std::iter::once(&train).chain(test.as_ref()) {
            if !d.is_empty() && d.image_shape() != decoder.output_shape() {
                return Err(Error::shape(format!(
                    "{} images {:?} vs decoder output {:?}",
                    d.name,
                    d.image_shape(),
                    decoder.output_shape()
                )));
            }
        }
        if !loss.reconstruction_only_weight() {
            if phi.is_none() {
                return Err(Error::invalid("lambda < 1 needs a task function"));
            }
            if matches!(train.labels(), Labels::None) {
                return Err(Error::invalid("lambda < 1 needs labelled training data"));
            }
        }
        Ok(Self {
            decoder,
            phi,
            adam: AdamState::new(adam)?,
            loss,
            calibrate: calibrate_alpha,
            train,
            test,
            last_good: None,
        })
    }

    pub fn decoder(&self) -> &Model {
        &self.decoder
    }

    pub fn loss_config(&self) -> &LossConfig {
        &self.loss
    }

    /// Decodes `msg`, evaluates the loss and returns the feedback without
    /// updating the decoder. `z` is ignored when `lambda = 1`.
    pub fn feedback_for(
        &mut self,
        msg: &DataBatch,
        k: &Tensor,
        z: Option<&Targets>,
    ) -> Result<(FeedbackMessage, SemanticLoss)> {
        let b = msg.y.batch_size();
        if msg.y.rank() != 2 || msg.y.shape()[1] != self.decoder.input_len() {
            return Err(Error::shape(format!(
                "DataBatch Y {:?}, decoder expects [B, {}]",
                msg.y.shape(),
                self.decoder.input_len()
            )));
        }
        if k.batch_size() != b {
            return Err(Error::shape(format!("{} sources for a batch of {b}", k.batch_size())));
        }
        self.decoder.zero_grad();
        let k_hat = self.decoder.forward(&msg.y)?;
        let pragmatic = !self.loss.reconstruction_only_weight();
        let z_hat = match (&mut self.phi, pragmatic) {
            (Some(phi), true) => Some(phi.apply(&k_hat)?),
            _ => None,
        };
        let z = if pragmatic { z } else { None };
        let comps = distortion_components(k, &k_hat, z, z_hat.as_ref(), self.loss.d_pr)?;
        if self.calibrate {
            self.loss.alpha = calibrate_alpha(&comps);
            self.calibrate = false;
            log::info!("alpha calibrated to {:.6}", self.loss.alpha);
        }
        let sl = comps.weighted(&self.loss)?;
        let mut grad = sl.grad_k_hat.clone();
        if let (Some(gz), Some(phi)) = (&sl.grad_z_hat, &mut self.phi) {
            grad = grad.add(&phi.pull_back(gz)?)?;
        }
        let grad_y = self.decoder.backward(&grad)?;
        Ok((
            FeedbackMessage {
                epoch: msg.epoch,
                batch_id: msg.batch_id,
                grad_y: grad_y.scale(b as f64),
                y: msg.y.clone(),
            },
            sl,
        ))
    }

    /// [`Receiver::feedback_for`] followed by an Adam step on the decoder.
    pub fn process_batch(
        &mut self,
        msg: &DataBatch,
        k: &Tensor,
        z: Option<&Targets>,
    ) -> Result<(FeedbackMessage, SemanticLoss)> {
        let out = self.feedback_for(msg, k, z)?;
        self.adam.step_model(&mut self.decoder)?;
        Ok(out)
    }

    fn expect_batch<S: Read + Write>(
        link: &mut FramedLink<S>,
        epoch: u32,
        batch_id: u32,
        eval: bool,
        size: usize,
    ) -> Result<DataBatch> {
        match link.recv()? {
            ProtocolMessage::DataBatch(m) => {
                if m.epoch != epoch || m.batch_id != batch_id || m.eval != eval {
                    return Err(Error::protocol(format!(
                        "expected batch {batch_id} of epoch {epoch}, got batch {} of epoch {}",
                        m.batch_id, m.epoch
                    )));
                }
                if m.y.batch_size() != size {
                    return Err(Error::protocol(format!(
                        "batch {batch_id} carries {} samples, expected {size}",
                        m.y.batch_size()
                    )));
                }
                Ok(m)
            }
            other => Err(Error::protocol(format!("expected DataBatch, got {}", other.name()))),
        }
    }

    fn expect_stop<S: Read + Write>(link: &mut FramedLink<S>, epoch: u32) -> Result<()> {
        match link.recv()? {
            ProtocolMessage::Control(c) if c.op == ControlOp::StopEpoch && c.epoch == epoch => Ok(()),
            other => Err(Error::protocol(format!("expected StopEpoch {epoch}, got {}", other.name()))),
        }
    }

    fn train_epoch<S: Read + Write>(
        &mut self,
        link: &mut FramedLink<S>,
        epoch: u32,
        opts: &LeadOptions,
    ) -> Result<(f64, f64, Option<f64>)> {
        let seed = shuffle_seed(opts.seed, epoch);
        link.send(&ProtocolMessage::Control(Control::start(epoch, seed, opts.batch_size as u32)))?;
        let pragmatic = !self.loss.reconstruction_only_weight();
        let (mut esd, mut d_ob, mut d_pr, mut n) = (0.0, 0.0, 0.0, 0usize);
        for (i, idx) in epoch_batches(self.train.len(), opts.batch_size, seed).iter().enumerate() {
            let msg = Self::expect_batch(link, epoch, i as u32, false, idx.len())?;
            let k = self.train.batch(idx)?;
            let z = if pragmatic { Some(self.train.targets(idx)?) } else { None };
            let (fb, sl) = self.process_batch(&msg, &k, z.as_ref())?;
            link.send(&ProtocolMessage::Feedback(fb))?;
            let w = idx.len() as f64;
            esd += sl.value * w;
            d_ob += sl.d_ob * w;
            d_pr += sl.d_pr.unwrap_or(0.0) * w;
            n += idx.len();
        }
        Self::expect_stop(link, epoch)?;
        let n = n.max(1) as f64;
        Ok((esd / n, d_ob / n, pragmatic.then_some(d_pr / n)))
    }

    fn eval_epoch<S: Read + Write>(
        &mut self,
        link: &mut FramedLink<S>,
        epoch: u32,
        batch_size: usize,
    ) -> Result<(Option<f64>, Option<f64>, Option<f64>)> {
        let Some(test) = self.test.as_ref().filter(|t| !t.is_empty()) else {
            return Ok((None, None, None));
        };
        link.send(&ProtocolMessage::Control(Control::start_eval(epoch, batch_size as u32)))?;
        let mut k_all = Vec::new();
        let mut k_hat_all = Vec::new();
        for (i, idx) in sequential_batches(test.len(), batch_size).iter().enumerate() {
            let msg = Self::expect_batch(link, epoch, i as u32, true, idx.len())?;
            k_hat_all.extend(self.decoder.infer(&msg.y)?.unstack());
            k_all.extend(idx.iter().map(|&j| test.images()[j].clone()));
        }
        Self::expect_stop(link, epoch)?;
        let k = Tensor::stack(&k_all)?;
        let k_hat = Tensor::stack(&k_hat_all)?;
        let p = psnr(&k, &k_hat)?;
        let (mut acc, mut iou) = (None, None);
        if let Some(phi) = &self.phi {
            let all: Vec<usize> = (0..test.len()).collect();
            if !matches!(test.labels(), Labels::None) {
                let targets = test.targets(&all)?;
                let m = metric_from_output(&phi.infer(&k_hat)?, &targets)?;
                match targets {
                    Targets::Classes(_) => acc = Some(m),
                    Targets::Masks(_) => iou = Some(m),
                }
            }
        }
        Ok((Some(p), acc, iou))
    }

    fn lead_inner<S: Read + Write>(
        &mut self,
        link: &mut FramedLink<S>,
        opts: &LeadOptions,
        metrics: &mut Vec<EpochMetrics>,
    ) -> Result<bool> {
        if opts.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if let Some(blob) = &opts.initial_encoder {
            link.send(&ProtocolMessage::EncoderParams(blob.clone()))?;
        }
        let mut best = f64::INFINITY;
        let mut stale = 0usize;
        let mut stopped_early = false;
        for e in 0..opts.stop.max_epochs {
            let epoch = e as u32;
            let (train_esd, train_d_ob, train_d_pr) = self.train_epoch(link, epoch, opts)?;
            let (test_psnr, test_accuracy, test_iou) = if opts.evaluate {
                self.eval_epoch(link, epoch, opts.batch_size)?
            } else {
                (None, None, None)
            };
            let m = EpochMetrics {
                epoch,
                train_esd,
                train_d_ob,
                train_d_pr,
                test_psnr,
                test_accuracy,
                test_iou,
            };
            log::info!(
                "epoch {epoch}: loss {train_esd:.6} psnr {test_psnr:?} accuracy {test_accuracy:?} iou {test_iou:?}"
            );
            link.send(&ProtocolMessage::MetricsReport(m.report()))?;
            metrics.push(m);
            self.last_good = Some((epoch, encode_model(&self.decoder)));
            if train_esd < best - opts.stop.min_improvement {
                best = train_esd;
                stale = 0;
            } else {
                stale += 1;
            }
            if opts.stop.patience > 0 && stale >= opts.stop.patience {
                stopped_early = true;
                break;
            }
        }
        link.send(&ProtocolMessage::Control(Control::shutdown()))?;
        Ok(stopped_early)
    }

    /// Drives the whole session: optional encoder hand-off, then per epoch
    /// a training pass, an optional evaluation pass and a metrics report,
    /// then Shutdown.
    pub fn lead<S: Read + Write>(
        mut self,
        mut link: FramedLink<S>,
        opts: &LeadOptions,
    ) -> Result<ReceiverOutcome<P>, SessionError> {
        let mut metrics = Vec::new();
        match self.lead_inner(&mut link, opts, &mut metrics) {
            Ok(stopped_early) => Ok(ReceiverOutcome {
                decoder: self.decoder,
                phi: self.phi,
                loss: self.loss,
                metrics,
                stopped_early,
                bytes_sent: link.bytes_sent(),
                bytes_received: link.bytes_received(),
            }),
            Err(source) => Err(SessionError::new(source, self.last_good)),
        }
    }
}
