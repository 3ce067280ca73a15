//! Unpaired VHS-to-HDTV video translation: models, training, and
//! no-reference quality assessment.
//!
//! The crate is organized bottom-up:
//! - [`tensor`] / [`autodiff`]: dense f64 tensors and a tape-based
//!   reverse-mode differentiation engine
//! - [`models`]: U-net generators, per-pixel discriminators, and the frozen
//!   feature extractor used by the perceptual loss
//! - [`losses`]: adversarial, cycle-consistency, and perceptual objectives
//! - [`data`]: frame extraction, synthetic degradation, dataset manifests,
//!   and batch sampling
//! - [`trainer`]: the interleaved style/resolution optimization loop with
//!   checkpointing and structured logs
//! - [`iqa`]: BRISQUE feature extraction and PIQE scoring for no-reference
//!   quality evaluation

pub mod archive;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod hash;
pub mod iqa;
pub mod losses;
pub mod models;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
