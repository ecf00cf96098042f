//! Multi-time-scale (MTS) convolution for spectrogram CNNs.
//!
//! An MTS layer holds one learned kernel bank and evaluates it at several
//! time-axis scale factors in parallel. Each branch kernel is a linearly
//! re-sampled copy of the canonical kernel; the branch feature maps are
//! re-sampled back to the length of the scale-1 map and merged with an
//! element-wise max over scales. The layer has exactly as many trainable
//! parameters as the plain convolution it replaces.
//!
//! The crate also carries everything needed to run spectrogram emotion
//! classification experiments around that layer: WAV preprocessing, speaker
//! independent cross-validation, a synthetic time-stretched corpus, the
//! training loop with early stopping, and significance testing.
//!
//! Numeric modules are generic over [`Scalar`] (`f32` or `f64`). The
//! experiment pipeline runs in `f64`; the aliases below name the concrete
//! types it uses.

pub mod audio;
pub mod convnet;
pub mod datasets;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod interp;
pub mod mts;
pub mod scalar;
pub mod stats;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use interp::ScaleSet;
pub use scalar::Scalar;
pub use tensor::{IndexTensor, Tensor};

/// Version string embedded in every results artifact.
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Conv2d64 = convnet::Conv2d<f64>;
pub type Conv2d32 = convnet::Conv2d<f32>;
pub type MtsConv2d64 = mts::MtsConv2d<f64>;
pub type MtsConv2d32 = mts::MtsConv2d<f32>;
pub type Network64 = trainer::Network<f64>;
pub type Network32 = trainer::Network<f32>;
