//! Lossless image compression and out-of-distribution scoring with local
//! autoregressive image models.
//!
//! The pieces, bottom up:
//!
//! * [`nn`]: masked convolutions and friends on `f32` tensors.
//! * [`model`]: the PixelCNN networks, weight files, and per-pixel
//!   evaluation from a causal window.
//! * [`mixture`]: the discretized logistic-uniform predictive distribution
//!   and its integer quantization.
//! * [`coders`]: arithmetic coding, rANS and interleaved rANS.
//! * [`codec`]: the compressor, decompressor and container format.
//! * [`ood`]: likelihood-ratio scores and AUROC.

pub mod codec;
pub mod coders;
pub mod error;
pub mod image;
pub mod mixture;
pub mod model;
pub mod nn;
pub mod ood;

pub use codec::{compress, decompress, ideal_codelength, CodeContainer, Coder, PatchGrid};
pub use error::{Error, Result};
pub use image::ImageTensor;
pub use mixture::{bpd, QuantizedPmf};
pub use model::{CausalWindow, MixtureParams, Model, ModelSpec, Variant, WeightBundle};
