//! Trainable layers with hand-written backward passes, and Adam.

mod activation;
mod adam;
mod conv;
mod dense;
mod pool;

pub use activation::{cross_entropy, relu, relu_backward, softmax, softmax_cross_entropy_grad};
pub use adam::{AdamConfig, AdamState};
pub use conv::{
    add_channel_bias, channel_bias_grad, conv2d_backward, conv2d_forward, correlate_backward, correlate_valid, Conv2d,
    ConvGrads,
};
pub use dense::{Dense, DenseGrads};
pub use pool::{maxpool2d, maxpool2d_backward, PoolIndices};

use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Glorot-uniform initialisation: entries uniform in ±√(6/(fan_in+fan_out)).
pub fn glorot_uniform<T: Scalar, R: Rng + ?Sized>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::of(rng.gen_range(-limit..=limit))).expect("valid init shape")
}
