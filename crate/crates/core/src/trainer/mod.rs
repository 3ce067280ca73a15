//! Alternating two-task training loop.
//!
//! One cycle is a *style* step (unpaired translation: both discriminators
//! on detached fakes, then G and F jointly on adversarial + cycle terms)
//! followed by `k` *resolution* steps (D_Z on detached enhancements, then
//! the shared generator on adversarial + perceptual terms). The resolution
//! steps drive the same parameter storage and the same optimizer instance
//! as the style steps — that coupling is the whole point of the shared
//! branch.
//!
//! Every step is transactional: optimizer state and touched weights are
//! snapshotted on entry, updates are checked for finiteness before they are
//! applied, and a non-finite loss or update rolls the step back and retries
//! with fresh batches. Three consecutive rollbacks end the run as diverged.

mod adam;
mod checkpoint;
mod pool;

pub use adam::{Adam, AdamSnapshot, ADAM_EPS};
pub use pool::ImagePool;

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::data::{
    sample_batch, sample_z_pairs, DatasetManifest, Domain, Split, MIN_DIM,
};
use crate::error::{Error, Result};
use crate::losses::{
    adversarial_loss_d, adversarial_loss_g, cycle_loss, perceptual_loss,
    total_generator_objective, LossReport, LossWeights, PerceptualForm,
};
use crate::models::{init_models, ModelBundle, ModelConfig};
use crate::tensor::Tensor;

/// Consecutive rolled-back steps tolerated before declaring divergence.
pub const MAX_CONSECUTIVE_ABORTS: u32 = 3;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub weights: LossWeights,
    pub perceptual_form: PerceptualForm,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub crop: usize,
    /// Resolution steps per style step (the `k` of the schedule).
    #[serde(rename = "res_steps_per_cycle_step")]
    pub res_steps_per_cycle: usize,
    pub cycles: usize,
    /// Checkpoint every this many cycles (a final checkpoint always lands).
    pub checkpoint_every: usize,
    /// Discriminator history pool capacity; 0 disables the pool.
    pub fake_pool: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            model: ModelConfig::default(),
            weights: LossWeights::default(),
            perceptual_form: PerceptualForm::default(),
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            batch_size: 1,
            crop: 256,
            res_steps_per_cycle: 5,
            cycles: 100,
            checkpoint_every: 25,
            fake_pool: 0,
        }
    }
}

impl TrainConfig {
    /// Laptop-scale preset: tiny networks, small crops, raw-pixel
    /// perceptual features. Minutes instead of days, same code paths.
    pub fn desk() -> TrainConfig {
        TrainConfig {
            model: ModelConfig {
                depth: 4,
                base_channels: 8,
                max_channels: 64,
                feature_tap: "identity".into(),
                ..ModelConfig::default()
            },
            crop: 64,
            batch_size: 2,
            cycles: 20,
            checkpoint_every: 10,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.weights.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!(
                    "{} must be in [0, 1), got {}",
                    name, b
                )));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.crop < MIN_DIM {
            return Err(Error::Config(format!(
                "crop {} is below the {} minimum",
                self.crop, MIN_DIM
            )));
        }
        let multiple = 1usize << self.model.depth;
        if self.crop % multiple != 0 {
            return Err(Error::Config(format!(
                "crop {} must be divisible by {} (2^depth) for the encoder",
                self.crop, multiple
            )));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Losses observed by one style step.
#[derive(Clone, Copy, Debug)]
pub struct StyleLosses {
    pub gan_g_y: f64,
    pub gan_f_x: f64,
    pub cyc: f64,
    pub d_x: f64,
    pub d_y: f64,
}

/// Losses observed by one resolution step.
#[derive(Clone, Copy, Debug)]
pub struct ResolutionLosses {
    pub gan_g_z: f64,
    pub perc: f64,
    pub d_z: f64,
}

pub struct Trainer {
    cfg: TrainConfig,
    pub models: ModelBundle,
    opt_g: Adam,
    opt_f: Adam,
    opt_d_x: Adam,
    opt_d_y: Adam,
    opt_d_z: Adam,
    rng: ChaCha8Rng,
    style_steps: u64,
    res_steps: u64,
    consecutive_aborts: u32,
    pool_x: ImagePool,
    pool_y: ImagePool,
    pool_z: ImagePool,
}

fn ensure_finite(v: f64, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("loss term {}", what)))
    }
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Trainer> {
        cfg.validate()?;
        let models = init_models(&cfg.model, cfg.weights.gan_form, cfg.seed)?;
        let adam = |params| Adam::new(params, cfg.lr, cfg.beta1, cfg.beta2);
        let opt_g = adam(models.g.params());
        let opt_f = adam(models.f.params());
        let opt_d_x = adam(models.d_x.params());
        let opt_d_y = adam(models.d_y.params());
        let opt_d_z = adam(models.d_z.params());
        // Stream 1 keeps batch sampling decoupled from model init, which
        // consumed stream 0 of the same seed.
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let pool = cfg.fake_pool;
        Ok(Trainer {
            cfg,
            models,
            opt_g,
            opt_f,
            opt_d_x,
            opt_d_y,
            opt_d_z,
            rng,
            style_steps: 0,
            res_steps: 0,
            consecutive_aborts: 0,
            pool_x: ImagePool::new(pool),
            pool_y: ImagePool::new(pool),
            pool_z: ImagePool::new(pool),
        })
    }

    pub fn cfg(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn style_steps(&self) -> u64 {
        self.style_steps
    }

    pub fn res_steps(&self) -> u64 {
        self.res_steps
    }

    /// One unpaired translation step: D_Y and D_X on detached fakes, then G
    /// and F jointly on the adversarial and cycle terms.
    pub fn style_step(&mut self, manifest: &DatasetManifest) -> Result<StyleLosses> {
        loop {
            let snaps = [
                self.opt_g.snapshot(),
                self.opt_f.snapshot(),
                self.opt_d_x.snapshot(),
                self.opt_d_y.snapshot(),
            ];
            match self.try_style_step(manifest) {
                Ok(losses) => {
                    self.consecutive_aborts = 0;
                    self.style_steps += 1;
                    return Ok(losses);
                }
                Err(Error::NonFinite(what)) => {
                    self.opt_g.restore(&snaps[0]);
                    self.opt_f.restore(&snaps[1]);
                    self.opt_d_x.restore(&snaps[2]);
                    self.opt_d_y.restore(&snaps[3]);
                    self.register_abort(&what)?;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// One super-resolution step: D_Z on detached enhancements, then the
    /// shared generator on the adversarial and perceptual terms.
    pub fn resolution_step(&mut self, manifest: &DatasetManifest) -> Result<ResolutionLosses> {
        loop {
            let snaps = [self.opt_g.snapshot(), self.opt_d_z.snapshot()];
            match self.try_resolution_step(manifest) {
                Ok(losses) => {
                    self.consecutive_aborts = 0;
                    self.res_steps += 1;
                    return Ok(losses);
                }
                Err(Error::NonFinite(what)) => {
                    self.opt_g.restore(&snaps[0]);
                    self.opt_d_z.restore(&snaps[1]);
                    self.register_abort(&what)?;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn register_abort(&mut self, what: &str) -> Result<()> {
        self.consecutive_aborts += 1;
        if self.consecutive_aborts >= MAX_CONSECUTIVE_ABORTS {
            return Err(Error::Diverged(format!(
                "{} consecutive steps rolled back; last abort: {}",
                self.consecutive_aborts, what
            )));
        }
        Ok(())
    }

    fn try_style_step(&mut self, manifest: &DatasetManifest) -> Result<StyleLosses> {
        let b = self.cfg.batch_size;
        let crop = self.cfg.crop;
        let form = self.cfg.weights.gan_form;
        let x = sample_batch(manifest, Domain::X, Split::Train, b, crop, &mut self.rng)?;
        let y = sample_batch(manifest, Domain::Y, Split::Train, b, crop, &mut self.rng)?;

        // Discriminator phase, on detached fakes.
        let fake_y = self.models.g.infer(x.clone())?;
        let fake_x = self.models.f.infer(y.clone())?;
        let fake_y = self.pool_y.query(&fake_y, &mut self.rng);
        let fake_x = self.pool_x.query(&fake_x, &mut self.rng);

        let d_y = self.disc_phase(&y, &fake_y, DiscGroup::Y, form)?;
        let d_x = self.disc_phase(&x, &fake_x, DiscGroup::X, form)?;

        // Generator phase: one tape for both directions and the cycles.
        let mut tape = Tape::new();
        let xl = tape.leaf(x);
        let yl = tape.leaf(y);
        let fake_y = self.models.g.forward(&mut tape, xl)?;
        let fake_x = self.models.f.forward(&mut tape, yl)?;
        let rec_x = self.models.f.forward(&mut tape, fake_y)?;
        let rec_y = self.models.g.forward(&mut tape, fake_x)?;
        let d_y_fake = self.models.d_y.forward(&mut tape, fake_y)?;
        let d_x_fake = self.models.d_x.forward(&mut tape, fake_x)?;
        let gan_g_y = adversarial_loss_g(&mut tape, d_y_fake, form);
        let gan_f_x = adversarial_loss_g(&mut tape, d_x_fake, form);
        let cyc = cycle_loss(&mut tape, xl, rec_x, yl, rec_y)?;
        let zero_z = tape.leaf(Tensor::scalar(0.0));
        let zero_p = tape.leaf(Tensor::scalar(0.0));
        let total = total_generator_objective(
            &mut tape,
            gan_g_y,
            gan_f_x,
            zero_z,
            cyc,
            zero_p,
            &self.cfg.weights,
        )?;
        let losses = StyleLosses {
            gan_g_y: tape.scalar(gan_g_y),
            gan_f_x: tape.scalar(gan_f_x),
            cyc: tape.scalar(cyc),
            d_x,
            d_y,
        };
        self.opt_g.zero_grads();
        self.opt_f.zero_grads();
        tape.backward(total);
        self.opt_g.step()?;
        self.opt_f.step()?;
        Ok(losses)
    }

    fn try_resolution_step(&mut self, manifest: &DatasetManifest) -> Result<ResolutionLosses> {
        let b = self.cfg.batch_size;
        let crop = self.cfg.crop;
        let form = self.cfg.weights.gan_form;
        let (z, y) = sample_z_pairs(manifest, Split::Train, b, crop, &mut self.rng)?;

        // Discriminator phase, on detached enhancements.
        let fake = self.models.enhance.infer(z.clone())?;
        let fake = self.pool_z.query(&fake, &mut self.rng);
        let d_z = self.disc_phase(&y, &fake, DiscGroup::Z, form)?;

        // Generator phase. Reference features are computed off-tape: the
        // extractor is frozen and y needs no gradient.
        let feats_real = self.models.features.infer(y.clone())?;
        let mut tape = Tape::new();
        let zl = tape.leaf(z);
        let fake = self.models.enhance.forward(&mut tape, zl)?;
        let d_fake = self.models.d_z.forward(&mut tape, fake)?;
        let gan_g_z = adversarial_loss_g(&mut tape, d_fake, form);
        let feats_fake = self.models.features.forward(&mut tape, fake)?;
        let feats_ref = tape.leaf(feats_real);
        let perc = perceptual_loss(&mut tape, feats_fake, feats_ref, self.cfg.perceptual_form)?;
        let zero_y = tape.leaf(Tensor::scalar(0.0));
        let zero_x = tape.leaf(Tensor::scalar(0.0));
        let zero_c = tape.leaf(Tensor::scalar(0.0));
        let total = total_generator_objective(
            &mut tape,
            zero_y,
            zero_x,
            gan_g_z,
            zero_c,
            perc,
            &self.cfg.weights,
        )?;
        let losses = ResolutionLosses {
            gan_g_z: tape.scalar(gan_g_z),
            perc: tape.scalar(perc),
            d_z,
        };
        self.opt_g.zero_grads();
        tape.backward(total);
        self.opt_g.step()?;
        Ok(losses)
    }

    /// Shared discriminator update: fresh tape, loss on (real, detached
    /// fake), finiteness check, backward, step. Returns the loss value.
    fn disc_phase(
        &mut self,
        real: &Tensor,
        fake: &Tensor,
        group: DiscGroup,
        form: crate::losses::GanForm,
    ) -> Result<f64> {
        let mut tape = Tape::new();
        let rl = tape.leaf(real.clone());
        let fl = tape.leaf(fake.clone());
        let disc = match group {
            DiscGroup::X => &self.models.d_x,
            DiscGroup::Y => &self.models.d_y,
            DiscGroup::Z => &self.models.d_z,
        };
        let d_real = disc.forward(&mut tape, rl)?;
        let d_fake = disc.forward(&mut tape, fl)?;
        let loss = adversarial_loss_d(&mut tape, d_real, d_fake, form)?;
        let value = tape.scalar(loss);
        ensure_finite(value, group.loss_name())?;
        let opt = match group {
            DiscGroup::X => &mut self.opt_d_x,
            DiscGroup::Y => &mut self.opt_d_y,
            DiscGroup::Z => &mut self.opt_d_z,
        };
        opt.zero_grads();
        tape.backward(loss);
        opt.step()?;
        Ok(value)
    }

    /// One full cycle: a style step then `k` resolution steps, each on
    /// fresh batches. Resolution losses are averaged into the report.
    pub fn cycle(&mut self, manifest: &DatasetManifest) -> Result<LossReport> {
        let style = self.style_step(manifest)?;
        let k = self.cfg.res_steps_per_cycle;
        let (mut gan_g_z, mut perc, mut d_z) = (0.0, 0.0, 0.0);
        for _ in 0..k {
            let r = self.resolution_step(manifest)?;
            gan_g_z += r.gan_g_z;
            perc += r.perc;
            d_z += r.d_z;
        }
        let kf = k.max(1) as f64;
        let mut report = LossReport {
            step: self.style_steps,
            gan_g_y: style.gan_g_y,
            gan_f_x: style.gan_f_x,
            gan_g_z: gan_g_z / kf,
            cyc: style.cyc,
            perc: perc / kf,
            total_g: 0.0,
            total_d_x: style.d_x,
            total_d_y: style.d_y,
            total_d_z: d_z / kf,
        };
        report.total_g = report.derive_total_g(&self.cfg.weights);
        Ok(report)
    }

    /// Run `cycles` cycles against `run_dir`: writes `config.json` (and
    /// refuses a directory configured differently), appends one JSON loss
    /// report per cycle to `log.jsonl`, and checkpoints on schedule plus
    /// once at the end.
    pub fn run(
        &mut self,
        manifest: &DatasetManifest,
        run_dir: &Path,
        cycles: usize,
    ) -> Result<PathBuf> {
        std::fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
        let cfg_path = run_dir.join("config.json");
        let mut cfg_json = serde_json::to_string_pretty(&self.cfg)?;
        cfg_json.push('\n');
        match std::fs::read_to_string(&cfg_path) {
            Ok(existing) => {
                if existing != cfg_json {
                    return Err(Error::Config(format!(
                        "{} belongs to a run with a different config",
                        cfg_path.display()
                    )));
                }
            }
            Err(_) => {
                std::fs::write(&cfg_path, &cfg_json).map_err(|e| Error::io(&cfg_path, e))?
            }
        }
        let log_path = run_dir.join("log.jsonl");
        let mut log = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| Error::io(&log_path, e))?;

        let mut last_ckpt = None;
        for _ in 0..cycles {
            let report = self.cycle(manifest)?;
            let line = serde_json::to_string(&report)?;
            writeln!(log, "{}", line).map_err(|e| Error::io(&log_path, e))?;
            if self.style_steps % self.cfg.checkpoint_every as u64 == 0 {
                last_ckpt = Some(self.save_checkpoint(run_dir)?);
            }
        }
        match last_ckpt {
            Some(p) if self.style_steps % self.cfg.checkpoint_every as u64 == 0 => Ok(p),
            _ => self.save_checkpoint(run_dir),
        }
    }
}

#[derive(Clone, Copy)]
enum DiscGroup {
    X,
    Y,
    Z,
}

impl DiscGroup {
    fn loss_name(self) -> &'static str {
        match self {
            DiscGroup::X => "total_d_x",
            DiscGroup::Y => "total_d_y",
            DiscGroup::Z => "total_d_z",
        }
    }
}
