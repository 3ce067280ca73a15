//! Frozen convolutional feature extractor for the perceptual distance.
//!
//! The layout follows the classic 19-layer VGG feature stack: 3x3
//! convolutions with rectifier activations, 2x2 max pooling after each named
//! block. The tap stage selects which activation feeds the perceptual loss
//! (default `conv4_4`, the input to the fourth pooling layer). Only the
//! stages up to the tap are instantiated.
//!
//! Weight sources, in order of preference:
//! - an archive file with tensors named `vgg.<stage>.w` / `vgg.<stage>.b`
//!   (e.g. `vgg.conv3_2.w` with shape [256, 256, 3, 3])
//! - the documented fixed-seed random fallback (`with_random_weights`),
//!   which draws fan-in-scaled Gaussians so activations stay well-ranged;
//!   useful wherever a *fixed, frozen* embedding suffices (smoke tests)
//! - `identity`, a diagnostic tap where "features" are the raw signed
//!   pixels, bypassing normalization entirely
//!
//! All parameters are non-trainable; no optimizer ever sees them.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::archive::Archive;
use crate::autodiff::{Param, Tape, Value};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-channel statistics the pretrained stack was trained with; inputs are
/// remapped from the signed range onto these before the first convolution.
const INPUT_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
const INPUT_STD: [f64; 3] = [0.229, 0.224, 0.225];

/// (stage name, input channels, output channels, pool follows this stage).
const LAYOUT: &[(&str, usize, usize, bool)] = &[
    ("conv1_1", 3, 64, false),
    ("conv1_2", 64, 64, true),
    ("conv2_1", 64, 128, false),
    ("conv2_2", 128, 128, true),
    ("conv3_1", 128, 256, false),
    ("conv3_2", 256, 256, false),
    ("conv3_3", 256, 256, false),
    ("conv3_4", 256, 256, true),
    ("conv4_1", 256, 512, false),
    ("conv4_2", 512, 512, false),
    ("conv4_3", 512, 512, false),
    ("conv4_4", 512, 512, true),
    ("conv5_1", 512, 512, false),
    ("conv5_2", 512, 512, false),
    ("conv5_3", 512, 512, false),
    ("conv5_4", 512, 512, true),
];

/// The tap name that selects the diagnostic pixel-identity mode.
pub const IDENTITY_TAP: &str = "identity";

#[derive(Clone)]
struct Stage {
    w: Param,
    b: Param,
    pool_after: bool,
}

#[derive(Clone)]
pub struct FeatureExtractor {
    /// Index of the tap stage in `stages`; `None` is the identity tap.
    tap: Option<usize>,
    tap_name: String,
    /// Fixed 1x1 conv implementing signed-range -> normalized-input remap.
    input_norm: Option<(Param, Param)>,
    stages: Vec<Stage>,
}

fn tap_index(tap: &str) -> Result<usize> {
    LAYOUT
        .iter()
        .position(|(name, ..)| *name == tap)
        .ok_or_else(|| {
            Error::Config(format!(
                "unknown feature tap `{}` (expected `{}` or one of conv1_1..conv5_4)",
                tap, IDENTITY_TAP
            ))
        })
}

/// The fixed input remap as a 1x1 convolution: first [-1,1] -> [0,1], then
/// per-channel standardization, fused into one scale and bias per channel.
fn input_norm_params() -> (Param, Param) {
    let mut w = Tensor::zeros(&[3, 3, 1, 1]);
    let mut b = Tensor::zeros(&[3]);
    for c in 0..3 {
        // x_norm = ((x + 1)/2 - mean) / std = x/(2 std) + (0.5 - mean)/std
        w.data_mut()[c * 3 + c] = 1.0 / (2.0 * INPUT_STD[c]);
        b.data_mut()[c] = (0.5 - INPUT_MEAN[c]) / INPUT_STD[c];
    }
    (
        Param::new("vgg.input_norm.w", w, false),
        Param::new("vgg.input_norm.b", b, false),
    )
}

impl FeatureExtractor {
    /// Diagnostic mode: features are the input pixels, untouched.
    pub fn identity() -> FeatureExtractor {
        FeatureExtractor {
            tap: None,
            tap_name: IDENTITY_TAP.to_string(),
            input_norm: None,
            stages: Vec::new(),
        }
    }

    /// Load stage weights up to `tap` from a tensor archive.
    pub fn from_archive(path: &Path, tap: &str) -> Result<FeatureExtractor> {
        if tap == IDENTITY_TAP {
            return Ok(FeatureExtractor::identity());
        }
        let idx = tap_index(tap)?;
        let archive = Archive::read(path)?;
        let mut stages = Vec::with_capacity(idx + 1);
        for &(name, in_c, out_c, pool_after) in &LAYOUT[..=idx] {
            let w = archive.tensor(&format!("vgg.{name}.w"))?;
            let b = archive.tensor(&format!("vgg.{name}.b"))?;
            if w.shape() != [out_c, in_c, 3, 3] || b.shape() != [out_c] {
                return Err(Error::Incompatible(format!(
                    "stage {} has shape {:?}/{:?}, expected [{},{},3,3]/[{}]",
                    name,
                    w.shape(),
                    b.shape(),
                    out_c,
                    in_c,
                    out_c
                )));
            }
            stages.push(Stage {
                w: Param::new(format!("vgg.{name}.w"), w.clone(), false),
                b: Param::new(format!("vgg.{name}.b"), b.clone(), false),
                pool_after,
            });
        }
        Ok(FeatureExtractor {
            tap: Some(idx),
            tap_name: tap.to_string(),
            input_norm: Some(input_norm_params()),
            stages,
        })
    }

    /// Fixed-seed random weights: zero-mean Gaussians with std
    /// sqrt(2 / fan_in), so deep activations neither vanish nor explode.
    pub fn with_random_weights(tap: &str, seed: u64) -> Result<FeatureExtractor> {
        if tap == IDENTITY_TAP {
            return Ok(FeatureExtractor::identity());
        }
        let idx = tap_index(tap)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut stages = Vec::with_capacity(idx + 1);
        for &(name, in_c, out_c, pool_after) in &LAYOUT[..=idx] {
            let std = (2.0 / (in_c * 9) as f64).sqrt();
            let n = out_c * in_c * 9;
            let data: Vec<f64> = (0..n)
                .map(|_| std * rng.sample::<f64, _>(StandardNormal))
                .collect();
            stages.push(Stage {
                w: Param::new(
                    format!("vgg.{name}.w"),
                    Tensor::new(&[out_c, in_c, 3, 3], data),
                    false,
                ),
                b: Param::new(format!("vgg.{name}.b"), Tensor::zeros(&[out_c]), false),
                pool_after,
            });
        }
        Ok(FeatureExtractor {
            tap: Some(idx),
            tap_name: tap.to_string(),
            input_norm: Some(input_norm_params()),
            stages,
        })
    }

    pub fn tap_stage(&self) -> &str {
        &self.tap_name
    }

    pub fn is_identity(&self) -> bool {
        self.tap.is_none()
    }

    /// Extract features from a signed-range image batch.
    pub fn forward(&self, tape: &mut Tape, x: Value) -> Result<Value> {
        let idx = match self.tap {
            None => return Ok(x),
            Some(idx) => idx,
        };
        let (norm_w, norm_b) = self.input_norm.as_ref().expect("non-identity has norm");
        let mut cur = tape.conv2d(x, norm_w, Some(norm_b), 1, 0)?;
        for (i, stage) in self.stages.iter().enumerate() {
            cur = tape.conv2d(cur, &stage.w, Some(&stage.b), 1, 1)?;
            cur = tape.relu(cur);
            // The tap takes the activation *before* its block's pool.
            if i < idx && stage.pool_after {
                cur = tape.maxpool2(cur)?;
            }
        }
        Ok(cur)
    }

    pub fn infer(&self, x: Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let v = tape.leaf(x);
        let y = self.forward(&mut tape, v)?;
        Ok(tape.value(y).clone())
    }

    pub fn params(&self) -> Vec<Param> {
        self.stages
            .iter()
            .flat_map(|s| [s.w.clone(), s.b.clone()])
            .collect()
    }
}
