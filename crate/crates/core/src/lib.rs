//! Task-unaware semantic communication at desk scale.
//!
//! A transmitter encodes images with a learned joint source-channel encoder,
//! sends the symbols over a simulated AWGN channel, and a receiver decodes
//! them and runs a pragmatic task (classification or segmentation). The
//! receiver leads training: it feeds back the loss gradient with respect to
//! the channel output so the transmitter can update its encoder without ever
//! seeing task labels or the task model.
//!
//! Modules:
//! - [`tensor_nn`]: tensors, sequential models with backprop, Adam, losses,
//!   parameter blobs.
//! - [`channel`]: power normalization, AWGN, compression rate.
//! - [`semantic_coding`]: coder pairs, semantic distortion losses, the
//!   pragmatic function and receiver-local pretraining.
//! - [`split_protocol`]: wire format, transports and the two endpoints of
//!   split training.
//! - [`data_adaptation`]: cycle-consistent adversarial mapping of observed
//!   data into the library domain.
//! - [`similarity`]: merged-dataset construction and proxy A-distance.
//! - [`datasets_metrics`]: IDX I/O, synthetic datasets, resampling, PSNR,
//!   accuracy and IoU.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod data_adaptation;
pub mod datasets_metrics;
pub mod semantic_coding;
pub mod similarity;
pub mod split_protocol;
mod error;
pub mod tensor_nn;

pub use error::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used for every seeded random stream in the crate.
pub type Rng = ChaCha8Rng;

/// Deterministic generator for `seed`.
pub fn seeded_rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tensors.md")]
    mod tensors {}
    #[doc = include_str!("../../../book/src/channel.md")]
    mod channel {}
    #[doc = include_str!("../../../book/src/coders.md")]
    mod coders {}
    #[doc = include_str!("../../../book/src/split-training.md")]
    mod split_training {}
    #[doc = include_str!("../../../book/src/wire.md")]
    mod wire {}
    #[doc = include_str!("../../../book/src/adaptation.md")]
    mod adaptation {}
    #[doc = include_str!("../../../book/src/similarity.md")]
    mod similarity {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
