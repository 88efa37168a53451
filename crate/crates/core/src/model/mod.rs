//! The autoencoder: architecture, pooling schedule, encode/decode with
//! gradients, latent code files and checkpoints.

mod checkpoint;
mod config;
mod latent;
mod network;
mod schedule;

pub use checkpoint::{param_shapes, Checkpoint};
pub use config::ArchitectureConfig;
pub use latent::LatentCode;
pub use network::{BatchTape, ConvBlock, Encoded, Model};
pub use schedule::{make_schedule, PoolingSchedule};
