//! Frame I/O, degradation synthesis, dataset manifests, and batch sampling.

pub mod degrade;
pub mod extract;
pub mod frame;
pub mod manifest;
pub mod sample;

pub use degrade::{
    center_crop_to_multiple, gaussian_blur, resize, synthesize_lowres, DegradationConfig,
    Resample,
};
pub use extract::{extract_frames, extract_frames_with, DEFAULT_DECODER};
pub use frame::{psnr, Frame, ValueRange, MIN_DIM};
pub use manifest::{DatasetManifest, Domain, ManifestItem, Split};
pub use sample::{sample_batch, sample_z_pairs};
