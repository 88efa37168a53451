//! Face-convolution mesh autoencoder for triangle-mesh geometry compression.
//!
//! The pipeline works directly on mesh faces. An encoder alternates face
//! convolutions with feature-driven face-collapse pooling until the mesh is
//! small enough that its vertex coordinates fit in the latent budget `m`.
//! Every collapse is recorded, so the decoder can replay the records in
//! reverse and rebuild the original connectivity bit for bit while it
//! regresses the full-resolution geometry.
//!
//! Module map:
//!
//! - [`mesh`], [`io`], [`dataset`]: mesh data model, OFF/OBJ files, dataset splits
//! - [`kernels`]: convolution, batch norm, ReLU, MSE, Adam, gradient checking
//! - [`pool`]: collapse pooling, unpooling and the record side channel
//! - [`reconstruct`]: per-face 9D features to vertices and back
//! - [`model`]: architecture, schedule, encode/decode, checkpoints, latent codes
//! - [`metrics`]: Chamfer distance, normal error, curvature preservation
//! - [`trainer`]: training loop and evaluation sweeps
//! - [`shapes`]: procedural meshes used by tests and the self-check tooling

pub mod dataset;
pub mod error;
pub mod io;
pub mod kernels;
pub mod mesh;
pub mod metrics;
pub mod model;
pub mod pool;
pub mod reconstruct;
pub mod shapes;
pub mod sparse;
pub mod trainer;

pub use error::{Error, Result};
pub use mesh::Mesh;
