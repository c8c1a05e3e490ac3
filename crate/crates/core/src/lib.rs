//! Entangling/disentangling (EnD) feature regularization.
//!
//! The regularizer penalizes correlation between deep features of samples that
//! share a bias attribute and rewards correlation between samples that share a
//! target class but differ in bias. The crate ships the regularizer with
//! closed-form gradients, a small network with manual backpropagation to attach
//! it to, generators for color-biased datasets, and the training/evaluation loop.

mod codec;
pub mod data;
pub mod error;
pub mod linalg;
pub mod net;
pub mod regularizer;
pub mod trainer;

pub use error::{Error, Result};
pub use linalg::{Matrix, Real, Rng};
pub use regularizer::{EndConfig, LabeledBatch, RegularizerOutput};
