//! Minimal neural-network engine: forward evaluation, reverse-mode gradients,
//! Adam, and cosine learning-rate scheduling.

mod gradcheck;
mod graph;
mod layer;
mod loss;
mod optim;

pub use gradcheck::grad_check;
pub use graph::{ForwardTrace, ModelGraph};
pub use layer::{Conv2D, ConvTranspose2D, Dense, Layer, MaxPool2D};
pub use loss::{mse_loss, softmax_cross_entropy};
pub use optim::{cosine_lr, AdamState};
