//! Frequency-domain style augmentation and contrastive vision-text training
//! at desk scale.
//!
//! The crate bundles five pieces that together form a small, fully testable
//! domain-generalization training stack:
//!
//! - [`spectral`]: 2D FFT amplitude/phase decomposition and amplitude-mixing
//!   augmentation that perturbs style while preserving structure.
//! - [`losses`]: temperature-scaled similarity softmax, KL alignment loss for
//!   vision-text batches, and a suppression loss that drives the
//!   original-vs-augmented cosine-similarity matrix toward identity.
//! - [`model`]: a small differentiable encoder pair with hand-derived
//!   reverse-mode gradients, an AdamW-style optimizer, and a training loop.
//! - [`data`]: a synthetic domain-shift benchmark generator, manifests,
//!   batching, and style-partner pairing.
//! - [`metrics`]: weighted/macro/micro F1 and balanced accuracy.

pub mod data;
pub mod error;
pub mod image;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
