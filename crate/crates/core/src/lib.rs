//! Query-by-example keyword spotting with an MLP-Mixer encoder.
//!
//! - [`audio`] and [`features`]: 16 kHz PCM clips to 81x81 CMVN'd MFCCs
//! - [`mixer`]: the feature/time-mixing encoder, its head, loss and gradients
//! - [`training`]: data pipeline, Adam and the checkpoint format
//! - [`runtime`]: sliding-window embeddings, enrollment and detection
//! - [`eval`]: FRR at a false-accepts-per-hour operating point

pub mod audio;
pub mod error;
pub mod eval;
pub mod features;
pub mod mixer;
pub mod rng;
pub mod runtime;
pub mod training;

pub use error::{Error, Result};
