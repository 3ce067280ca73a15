//! The three network families and the parameter-sharing contract.
//!
//! [`ModelBundle`] owns the translation generators G (degraded -> clean) and
//! F (clean -> degraded), the three pixel-level discriminators, the frozen
//! feature extractor, and the enhancement branch. The enhancement network is
//! not a separate set of weights: it is constructed by cloning G's parameter
//! handles, so both branches read and write the same storage at every
//! instant.

mod discriminator;
mod features;
mod generator;

use std::path::PathBuf;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use discriminator::{Discriminator, FinalAct};
pub use features::{FeatureExtractor, IDENTITY_TAP};
pub use generator::{level_channels, Generator, NormKind, INIT_STD, LEAKY_SLOPE};

use crate::autodiff::{Param, Tape, Value};
use crate::error::{Error, Result};
use crate::losses::GanForm;
use crate::tensor::Tensor;

/// Architecture hyperparameters. Everything is serializable so a checkpoint
/// can rebuild byte-compatible networks.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Number of down/up levels in each generator.
    pub depth: usize,
    /// Channel width at the first encoder level; doubled per level.
    pub base_channels: usize,
    /// Cap on channel doubling.
    pub max_channels: usize,
    pub norm: NormKind,
    /// Diagnostic: generator output becomes clamp(input + core, -1, 1).
    pub residual_bypass: bool,
    /// Interior widths of the discriminator stacks.
    pub disc_widths: Vec<usize>,
    /// Feature stage feeding the perceptual loss, or `identity`.
    pub feature_tap: String,
    /// Archive with pretrained extractor weights; `None` selects the
    /// fixed-seed random fallback (or nothing, for the identity tap).
    pub feature_weights: Option<PathBuf>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            depth: 6,
            base_channels: 64,
            max_channels: 512,
            norm: NormKind::Instance,
            residual_bypass: false,
            disc_widths: vec![64, 128],
            feature_tap: "conv4_4".to_string(),
            feature_weights: None,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.depth > 10 {
            return Err(Error::Config(format!(
                "generator depth {} out of range 1..=10",
                self.depth
            )));
        }
        if self.base_channels == 0 || self.max_channels < self.base_channels {
            return Err(Error::Config(format!(
                "channel widths base={} max={} are inconsistent",
                self.base_channels, self.max_channels
            )));
        }
        if self.disc_widths.is_empty() || self.disc_widths.contains(&0) {
            return Err(Error::Config(
                "discriminator needs at least one nonzero interior width".into(),
            ));
        }
        Ok(())
    }
}

/// The resolution-enhancement branch. It holds no weights of its own — only
/// handles aliasing G's storage.
#[derive(Clone)]
pub struct EnhanceNet {
    net: Generator,
}

impl EnhanceNet {
    pub fn sharing(g: &Generator) -> EnhanceNet {
        EnhanceNet { net: g.clone() }
    }

    pub fn forward(&self, tape: &mut Tape, z: Value) -> Result<Value> {
        self.net.forward(tape, z)
    }

    pub fn infer(&self, z: Tensor) -> Result<Tensor> {
        self.net.infer(z)
    }

    pub fn params(&self) -> Vec<Param> {
        self.net.params()
    }
}

pub struct ModelBundle {
    pub g: Generator,
    pub f: Generator,
    pub enhance: EnhanceNet,
    pub d_x: Discriminator,
    pub d_y: Discriminator,
    pub d_z: Discriminator,
    pub features: FeatureExtractor,
}

impl ModelBundle {
    /// True when the enhancement branch aliases G's storage element-for-element.
    pub fn sharing_intact(&self) -> bool {
        let g = self.g.params();
        let e = self.enhance.params();
        g.len() == e.len()
            && g.iter().zip(e.iter()).all(|(a, b)| Param::ptr_eq(a, b))
    }

    /// Every distinct trainable parameter, for checkpointing (the enhance
    /// branch contributes nothing: its params are G's).
    pub fn trainable_params(&self) -> Vec<Param> {
        let mut out = self.g.params();
        out.extend(self.f.params());
        out.extend(self.d_x.params());
        out.extend(self.d_y.params());
        out.extend(self.d_z.params());
        out
    }
}

/// Build all networks from one seed. Construction order is fixed, so a seed
/// fully determines every weight.
pub fn init_models(cfg: &ModelConfig, gan_form: GanForm, seed: u64) -> Result<ModelBundle> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Generator::new("G", cfg, &mut rng);
    let f = Generator::new("F", cfg, &mut rng);
    let act = FinalAct::from(gan_form);
    let d_x = Discriminator::new("D_X", &cfg.disc_widths, act, &mut rng);
    let d_y = Discriminator::new("D_Y", &cfg.disc_widths, act, &mut rng);
    let d_z = Discriminator::new("D_Z", &cfg.disc_widths, act, &mut rng);
    let feature_seed = rng.next_u64();
    let features = match (&cfg.feature_weights, cfg.feature_tap.as_str()) {
        (_, tap) if tap == IDENTITY_TAP => FeatureExtractor::identity(),
        (Some(path), tap) => FeatureExtractor::from_archive(path, tap)?,
        (None, tap) => FeatureExtractor::with_random_weights(tap, feature_seed)?,
    };
    let enhance = EnhanceNet::sharing(&g);
    Ok(ModelBundle {
        g,
        f,
        enhance,
        d_x,
        d_y,
        d_z,
        features,
    })
}
