//! Protocol messages and their payload layouts.
//!
//! | kind | message        | payload                                                    |
//! |------|----------------|------------------------------------------------------------|
//! | 1    | DataBatch      | epoch u32, batch_id u32, tensor `Y`                        |
//! | 2    | Feedback       | epoch u32, batch_id u32, tensor `grad_Y`, tensor `Y`       |
//! | 3    | EncoderParams  | parameter blob                                             |
//! | 4    | Control        | op u8, epoch u32, shuffle_seed u64, batch_size u32         |
//! | 5    | MetricsReport  | epoch u32, then esd, accuracy, psnr, iou as f64 (NaN = n/a) |

use super::wire::{get_tensor, put_tensor, Frame, WirePrecision, FLAG_EVAL};
use crate::tensor_nn::{ByteReader, Tensor};
use crate::{Error, Result};

pub const KIND_DATA_BATCH: u8 = 1;
pub const KIND_FEEDBACK: u8 = 2;
pub const KIND_ENCODER_PARAMS: u8 = 3;
pub const KIND_CONTROL: u8 = 4;
pub const KIND_METRICS_REPORT: u8 = 5;

/// Channel outputs of one batch, transmitter to receiver.
#[derive(Clone, Debug, PartialEq)]
pub struct DataBatch {
    pub epoch: u32,
    pub batch_id: u32,
    /// `[B, n_x]`.
    pub y: Tensor,
    pub eval: bool,
}

/// Receiver to transmitter: per-sample `grad_Y` and the `Y` it belongs to.
#[derive(Clone, Debug, PartialEq)]
pub struct FeedbackMessage {
    pub epoch: u32,
    pub batch_id: u32,
    pub grad_y: Tensor,
    pub y: Tensor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControlOp {
    Start = 1,
    StopEpoch = 2,
    Shutdown = 3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Control {
    pub op: ControlOp,
    pub epoch: u32,
    pub shuffle_seed: u64,
    pub batch_size: u32,
    pub eval: bool,
}

impl Control {
    pub fn start(epoch: u32, shuffle_seed: u64, batch_size: u32) -> Self {
        Self {
            op: ControlOp::Start,
            epoch,
            shuffle_seed,
            batch_size,
            eval: false,
        }
    }

    pub fn start_eval(epoch: u32, batch_size: u32) -> Self {
        Self {
            eval: true,
            ..Self::start(epoch, 0, batch_size)
        }
    }

    pub fn stop_epoch(epoch: u32, eval: bool) -> Self {
        Self {
            op: ControlOp::StopEpoch,
            epoch,
            shuffle_seed: 0,
            batch_size: 0,
            eval,
        }
    }

    pub fn shutdown() -> Self {
        Self {
            op: ControlOp::Shutdown,
            epoch: 0,
            shuffle_seed: 0,
            batch_size: 0,
            eval: false,
        }
    }
}

/// Per-epoch summary sent by the receiver after evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub epoch: u32,
    pub esd: f64,
    pub accuracy: Option<f64>,
    pub psnr: Option<f64>,
    pub iou: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProtocolMessage {
    DataBatch(DataBatch),
    Feedback(FeedbackMessage),
    EncoderParams(Vec<u8>),
    Control(Control),
    MetricsReport(MetricsReport),
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_opt(out: &mut Vec<u8>, v: Option<f64>) {
    out.extend_from_slice(&v.unwrap_or(f64::NAN).to_le_bytes());
}

fn get_opt(r: &mut ByteReader<'_>) -> Result<Option<f64>> {
    let v = r.f64()?;
    Ok(if v.is_nan() { None } else { Some(v) })
}

impl ProtocolMessage {
    pub fn kind(&self) -> u8 {
        match self {
            ProtocolMessage::DataBatch(_) => KIND_DATA_BATCH,
            ProtocolMessage::Feedback(_) => KIND_FEEDBACK,
            ProtocolMessage::EncoderParams(_) => KIND_ENCODER_PARAMS,
            ProtocolMessage::Control(_) => KIND_CONTROL,
            ProtocolMessage::MetricsReport(_) => KIND_METRICS_REPORT,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProtocolMessage::DataBatch(_) => "DataBatch",
            ProtocolMessage::Feedback(_) => "Feedback",
            ProtocolMessage::EncoderParams(_) => "EncoderParams",
            ProtocolMessage::Control(_) => "Control",
            ProtocolMessage::MetricsReport(_) => "MetricsReport",
        }
    }

    pub fn to_frame(&self, precision: WirePrecision) -> Frame {
        let mut p = Vec::new();
        let mut flags = precision.flag();
        match self {
            ProtocolMessage::DataBatch(m) => {
                put_u32(&mut p, m.epoch);
                put_u32(&mut p, m.batch_id);
                put_tensor(&mut p, &m.y, precision);
                if m.eval {
                    flags |= FLAG_EVAL;
                }
            }
            ProtocolMessage::Feedback(m) => {
                put_u32(&mut p, m.epoch);
                put_u32(&mut p, m.batch_id);
                put_tensor(&mut p, &m.grad_y, precision);
                put_tensor(&mut p, &m.y, precision);
            }
            ProtocolMessage::EncoderParams(blob) => p.extend_from_slice(blob),
            ProtocolMessage::Control(c) => {
                p.push(c.op as u8);
                put_u32(&mut p, c.epoch);
                p.extend_from_slice(&c.shuffle_seed.to_le_bytes());
                put_u32(&mut p, c.batch_size);
                if c.eval {
                    flags |= FLAG_EVAL;
                }
            }
            ProtocolMessage::MetricsReport(m) => {
                put_u32(&mut p, m.epoch);
                p.extend_from_slice(&m.esd.to_le_bytes());
                put_opt(&mut p, m.accuracy);
                put_opt(&mut p, m.psnr);
                put_opt(&mut p, m.iou);
            }
        }
        Frame {
            kind: self.kind(),
            flags,
            payload: p,
        }
    }

    pub fn encode(&self, precision: WirePrecision) -> Vec<u8> {
        self.to_frame(precision).encode()
    }

    pub fn from_frame(frame: &Frame) -> Result<Self> {
        let precision = WirePrecision::from_flags(frame.flags);
        let eval = frame.flags & FLAG_EVAL != 0;
        let mut r = ByteReader::new(&frame.payload);
        let msg = match frame.kind {
            KIND_DATA_BATCH => ProtocolMessage::DataBatch(DataBatch {
                epoch: r.u32()?,
                batch_id: r.u32()?,
                y: get_tensor(&mut r, precision)?,
                eval,
            }),
            KIND_FEEDBACK => {
                let epoch = r.u32()?;
                let batch_id = r.u32()?;
                let grad_y = get_tensor(&mut r, precision)?;
                let y = get_tensor(&mut r, precision)?;
                if grad_y.shape() != y.shape() {
                    return Err(Error::format(format!(
                        "feedback gradient {:?} and output {:?} differ in shape",
                        grad_y.shape(),
                        y.shape()
                    )));
                }
                ProtocolMessage::Feedback(FeedbackMessage {
                    epoch,
                    batch_id,
                    grad_y,
                    y,
                })
            }
            KIND_ENCODER_PARAMS => ProtocolMessage::EncoderParams(r.take(r.remaining())?.to_vec()),
            KIND_CONTROL => {
                let op = match r.u8()? {
                    1 => ControlOp::Start,
                    2 => ControlOp::StopEpoch,
                    3 => ControlOp::Shutdown,
                    other => return Err(Error::format(format!("unknown control op {other}"))),
                };
                ProtocolMessage::Control(Control {
                    op,
                    epoch: r.u32()?,
                    shuffle_seed: r.u64()?,
                    batch_size: r.u32()?,
                    eval,
                })
            }
            KIND_METRICS_REPORT => ProtocolMessage::MetricsReport(MetricsReport {
                epoch: r.u32()?,
                esd: r.f64()?,
                accuracy: get_opt(&mut r)?,
                psnr: get_opt(&mut r)?,
                iou: get_opt(&mut r)?,
            }),
            other => return Err(Error::format(format!("unknown message kind {other}"))),
        };
        r.finish()?;
        Ok(msg)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        Self::from_frame(&Frame::decode(bytes)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::split_protocol::wire::{tensor_wire_len, FRAME_HEADER_LEN, FRAME_TRAILER_LEN};

    #[test]
    fn data_batch_size_arithmetic() {
        let (b, n_x) = (5, 7);
        let m = ProtocolMessage::DataBatch(DataBatch {
            epoch: 0,
            batch_id: 0,
            y: Tensor::zeros(&[b, n_x]),
            eval: false,
        });
        let bytes = m.encode(WirePrecision::F32);
        // epoch + batch_id + rank + two dims + data
        let payload = 4 + 4 + 1 + 8 + b * n_x * 4;
        assert_eq!(payload, 8 + tensor_wire_len(&[b, n_x], WirePrecision::F32));
        assert_eq!(bytes.len(), FRAME_HEADER_LEN + payload + FRAME_TRAILER_LEN);
    }

    #[test]
    fn every_kind_round_trips() {
        let t = Tensor::row(&[0.5, -1.25]).unwrap();
        let msgs = [
            ProtocolMessage::DataBatch(DataBatch {
                epoch: 3,
                batch_id: 9,
                y: t.clone(),
                eval: true,
            }),
            ProtocolMessage::Feedback(FeedbackMessage {
                epoch: 1,
                batch_id: 2,
                grad_y: t.scale(2.0),
                y: t.clone(),
            }),
            ProtocolMessage::EncoderParams(vec![1, 2, 3]),
            ProtocolMessage::Control(Control::start(4, u64::MAX, 32)),
            ProtocolMessage::Control(Control::stop_epoch(4, true)),
            ProtocolMessage::Control(Control::shutdown()),
            ProtocolMessage::MetricsReport(MetricsReport {
                epoch: 2,
                esd: 0.5,
                accuracy: Some(0.75),
                psnr: Some(f64::INFINITY),
                iou: None,
            }),
        ];
        for m in msgs {
            for p in [WirePrecision::F32, WirePrecision::F64] {
                assert_eq!(ProtocolMessage::decode(&m.encode(p)).unwrap(), m);
            }
        }
    }

    #[test]
    fn feedback_shape_mismatch_rejected() {
        let m = ProtocolMessage::Feedback(FeedbackMessage {
            epoch: 0,
            batch_id: 0,
            grad_y: Tensor::zeros(&[1, 2]),
            y: Tensor::zeros(&[1, 3]),
        });
        assert!(ProtocolMessage::decode(&m.encode(WirePrecision::F64)).is_err());
    }
}
