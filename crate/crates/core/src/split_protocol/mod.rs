//! Receiver-led split training of the encoder/decoder pair.
//!
//! The transmitter owns the encoder and the observable images; the
//! receiver owns the decoder, the task function and the ground truth. Per
//! batch the transmitter sends the channel output `Y`; the receiver decodes,
//! evaluates the loss, updates its decoder and returns the per-sample
//! gradient `grad_Y` together with `Y`; the transmitter chains it through its
//! cached forward pass and updates the encoder. The result equals training
//! the composed model in one place.
//!
//! A session runs over any reliable ordered byte stream: an in-process pipe
//! or a TCP socket, with the same framing.

mod message;
mod receiver;
mod session;
mod transmitter;
mod transport;
pub mod wire;

pub use message::{
    Control, ControlOp, DataBatch, FeedbackMessage, MetricsReport, ProtocolMessage, KIND_CONTROL,
    KIND_DATA_BATCH, KIND_ENCODER_PARAMS, KIND_FEEDBACK, KIND_METRICS_REPORT,
};
pub use receiver::{EpochMetrics, LeadOptions, Receiver, ReceiverOutcome};
pub use session::{
    eval_channel_seed, run_training, shuffle_seed, SessionConfig, SessionError, StopConfig, TrainingOutcome,
    TransportKind,
};
pub use transmitter::{Transmitter, TransmitterOutcome};
pub use transport::{duplex_pipe, tcp_accept, tcp_connect, FramedLink, PipeEnd};
pub use wire::WirePrecision;

/// Which side of a session a process plays.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointRole {
    Transmitter,
    Receiver,
}
