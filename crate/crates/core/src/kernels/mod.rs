//! Differentiable per-face kernels.
//!
//! Features are `F x C` matrices (`ndarray::Array2<f64>`), one row per face of
//! the mesh level they belong to. Every kernel has an explicit backward pass;
//! [`gradcheck`] holds the central-difference checker used to verify them.

pub mod adam;
pub mod batchnorm;
pub mod conv;
pub mod gradcheck;
pub mod linear;
pub mod loss;
pub mod patch;
pub mod relu;

pub use adam::{Adam, AdamConfig};
pub use batchnorm::{BatchNorm, BatchNormCache, BnMode};
pub use conv::ConvWeights;
pub use linear::Linear;
pub use loss::mse_loss;
pub use patch::{build_patch, build_patches, Patch};
pub use relu::{relu, relu_backward};

use rand::Rng;

/// Uniform initialization in `±gain * sqrt(6 / (fan_in + fan_out))`.
pub(crate) fn xavier_uniform<R: Rng>(
    rng: &mut R,
    fan_out: usize,
    fan_in: usize,
    gain: f64,
) -> ndarray::Array2<f64> {
    let bound = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
    ndarray::Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-bound..=bound))
}
