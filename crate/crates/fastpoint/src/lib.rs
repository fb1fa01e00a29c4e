//! Hierarchical feature learning on 3D point clouds.
//!
//! The pipeline subsamples a cloud with farthest point sampling, gathers
//! neighbourhoods with kNN against the pre-sampling set, and extracts local
//! features with edge convolutions. Everything runs on a small tape-based
//! autodiff engine in `f32`, with an `f64` mode for gradient verification.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod geometry;
pub mod layers;
pub mod models;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{Mode, ParamSet, Tape, Tensor, Var};

/// RNG used everywhere determinism matters: portable and seedable.
pub type Rng = rand_chacha::ChaCha8Rng;
