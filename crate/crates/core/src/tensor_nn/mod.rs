//! Minimal tensor type, sequential networks with reverse-mode gradients,
//! the Adam optimizer, scalar losses and the parameter blob format.
//!
//! Everything is computed in `f64`. Models are sequential layer lists; the
//! forward pass records a [`Tape`] of activations that the backward pass
//! walks in reverse, so gradients compose across separately held models by
//! passing input gradients from one model's `backward` into the next.

mod blob;
mod layer;
mod loss;
mod model;
mod optim;
mod tensor;

pub(crate) use blob::ByteReader;
pub use blob::{decode_model, encode_model, BLOB_MAGIC, BLOB_VERSION};
pub use layer::{conv_kernel_size, glorot_bound, Layer, LayerKind};
pub use loss::{l1_loss, mse_loss, softmax, softmax_cross_entropy, LossGrad};
pub use model::{Model, ModelBuilder, Tape};
pub use optim::{AdamConfig, AdamState};
pub use tensor::Tensor;
