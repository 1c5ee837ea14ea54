//! Desk-scale simulator of multi-client split learning with differential privacy.
//!
//! A model is cut into a client-side head and a server-side tail; only split-layer
//! activations ("smashed data") and their gradients cross the boundary. Clients may
//! calibrate Gaussian noise to an (ε, δ) budget and inject it at any client-side
//! layer. The server can optionally *review* harder noise distributions by training
//! on noise-augmented duplicates of each incoming batch.
//!
//! Crate layout:
//! - [`tensor`]: dense row-major f64 tensors, the universal value type
//! - [`nn`]: forward/backward for the six supported layer kinds, Adam, schedules
//! - [`dp`]: Gaussian-mechanism calibration, clamping, noise composition
//! - [`zoo`]: the split architectures (LeNet-5 splits, VGG-11-lite, upsampled head)
//! - [`protocol`]: the round-robin multi-client training state machine
//! - [`attack`]: black-box model-inversion attack via a trained decoder
//! - [`metrics`]: SSIM, MSE, PSNR, distance correlation, accuracy
//! - [`data`]: IDX loading, synthetic datasets, IID / non-IID partitioning

pub mod attack;
pub mod data;
pub mod dp;
pub mod metrics;
pub mod nn;
pub mod protocol;
pub mod seed;
pub mod tensor;
pub mod zoo;

mod error;

pub use error::{Error, Result};
pub use tensor::Tensor;

/// Re-exported so downstream crates share the exact generator type used here.
pub use rand_chacha::ChaCha8Rng;
