//! Objective terms: adversarial (three discriminator pairings), bidirectional
//! cycle consistency, perceptual feature distance, and their weighted sum.
//!
//! Every function here builds nodes on a caller-supplied [`Tape`], so the
//! same code path serves evaluation (forward only) and training (forward +
//! backward). All reductions are per-element means, which keeps the weights
//! `lambda_cyc` / `kappa_perc` meaningful independent of resolution and
//! batch size.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Value};
use crate::error::{Error, Result};

/// Numeric guard bounds for probabilities entering a log.
pub const PROB_CLAMP_LO: f64 = 1e-7;
pub const PROB_CLAMP_HI: f64 = 1.0 - 1e-7;

/// Which GAN objective family to optimize.
///
/// `LeastSquares` pairs with a linear discriminator head, `VanillaLog` with a
/// sigmoid head. The generator side of the vanilla form uses the
/// non-saturating convention (−log D(fake) rather than log(1 − D(fake))).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GanForm {
    #[default]
    LeastSquares,
    VanillaLog,
}

/// How the perceptual distance reduces feature differences.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerceptualForm {
    /// Mean of squared differences (resolution-independent). Default.
    #[default]
    MeanSquared,
    /// Literal Euclidean norm of the difference, sqrt(sum of squares).
    L2Norm,
}

/// Weights of the aggregate objective.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_cyc: f64,
    pub kappa_perc: f64,
    pub gan_form: GanForm,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_cyc: 0.1,
            kappa_perc: 0.05,
            gan_form: GanForm::default(),
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_cyc >= 0.0 && self.kappa_perc >= 0.0) {
            return Err(Error::Config(format!(
                "loss weights must be non-negative (lambda_cyc={}, kappa_perc={})",
                self.lambda_cyc, self.kappa_perc
            )));
        }
        Ok(())
    }
}

/// Per-term scalars for one optimization step, streamed as one JSON line per
/// logging interval. Steps that run only one branch carry the other branch's
/// most recent values forward, so `total_g` always decomposes as
/// `gan_g_y + gan_f_x + gan_g_z + lambda*cyc + kappa*perc`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub step: u64,
    pub gan_g_y: f64,
    pub gan_f_x: f64,
    pub gan_g_z: f64,
    pub cyc: f64,
    pub perc: f64,
    pub total_g: f64,
    pub total_d_x: f64,
    pub total_d_y: f64,
    pub total_d_z: f64,
}

impl LossReport {
    /// Recompute `total_g` from the parts; the stored field must match this
    /// within 1e-6.
    pub fn derive_total_g(&self, w: &LossWeights) -> f64 {
        self.gan_g_y + self.gan_f_x + self.gan_g_z
            + w.lambda_cyc * self.cyc
            + w.kappa_perc * self.perc
    }
}

/// Discriminator objective: push realness maps toward 1 on real inputs and 0
/// on fakes. The discriminator MINIMIZES this (the maximization written in
/// the adversarial formulation, with its sign flipped).
pub fn adversarial_loss_d(
    tape: &mut Tape,
    d_real: Value,
    d_fake: Value,
    form: GanForm,
) -> Result<Value> {
    let (sr, sf) = (tape.value(d_real).shape(), tape.value(d_fake).shape());
    if sr != sf {
        return Err(Error::Shape(format!(
            "realness maps disagree: real {:?} vs fake {:?}",
            sr, sf
        )));
    }
    Ok(match form {
        GanForm::LeastSquares => {
            let r = tape.affine(d_real, 1.0, -1.0);
            let r2 = tape.square(r);
            let real_term = tape.mean_all(r2);
            let f2 = tape.square(d_fake);
            let fake_term = tape.mean_all(f2);
            tape.add(real_term, fake_term)
        }
        GanForm::VanillaLog => {
            let log_r = tape.ln_clamped(d_real, PROB_CLAMP_LO, PROB_CLAMP_HI);
            let mr = tape.mean_all(log_r);
            let one_minus_f = tape.affine(d_fake, -1.0, 1.0);
            let log_f = tape.ln_clamped(one_minus_f, PROB_CLAMP_LO, PROB_CLAMP_HI);
            let mf = tape.mean_all(log_f);
            let s = tape.add(mr, mf);
            tape.affine(s, -1.0, 0.0)
        }
    })
}

/// Generator-side adversarial objective: push the discriminator's output on
/// generated images toward "real".
pub fn adversarial_loss_g(tape: &mut Tape, d_fake: Value, form: GanForm) -> Value {
    match form {
        GanForm::LeastSquares => {
            let f = tape.affine(d_fake, 1.0, -1.0);
            let f2 = tape.square(f);
            tape.mean_all(f2)
        }
        GanForm::VanillaLog => {
            let log_f = tape.ln_clamped(d_fake, PROB_CLAMP_LO, PROB_CLAMP_HI);
            let m = tape.mean_all(log_f);
            tape.affine(m, -1.0, 0.0)
        }
    }
}

/// Bidirectional reconstruction penalty: mean |F(G(x)) − x| + mean |G(F(y)) − y|.
pub fn cycle_loss(
    tape: &mut Tape,
    x: Value,
    f_of_g_x: Value,
    y: Value,
    g_of_f_y: Value,
) -> Result<Value> {
    for (src, rec, name) in [(x, f_of_g_x, "x"), (y, g_of_f_y, "y")] {
        let (ss, rs) = (tape.value(src).shape(), tape.value(rec).shape());
        if ss != rs {
            return Err(Error::Shape(format!(
                "cycle reconstruction of {} has shape {:?}, source has {:?}",
                name, rs, ss
            )));
        }
    }
    let dx = tape.sub(f_of_g_x, x);
    let ax = tape.abs(dx);
    let mx = tape.mean_all(ax);
    let dy = tape.sub(g_of_f_y, y);
    let ay = tape.abs(dy);
    let my = tape.mean_all(ay);
    Ok(tape.add(mx, my))
}

/// Feature-space distance between a translated frame and its reference.
pub fn perceptual_loss(
    tape: &mut Tape,
    features_of_g_z: Value,
    features_of_y: Value,
    form: PerceptualForm,
) -> Result<Value> {
    let (sg, sy) = (
        tape.value(features_of_g_z).shape(),
        tape.value(features_of_y).shape(),
    );
    if sg != sy {
        return Err(Error::Shape(format!(
            "feature maps disagree: {:?} vs {:?} — translated and reference frames \
             must have equal dimensions (is restore_size enabled in the degradation config?)",
            sg, sy
        )));
    }
    let d = tape.sub(features_of_g_z, features_of_y);
    let d2 = tape.square(d);
    Ok(match form {
        PerceptualForm::MeanSquared => tape.mean_all(d2),
        PerceptualForm::L2Norm => {
            let s = tape.sum_all(d2);
            tape.sqrt(s)
        }
    })
}

/// Generator-side total: gan_G_Y + gan_F_X + gan_G_Z + λ·cyc + κ·perc.
///
/// Rejects non-finite parts up front, naming the offending term, so a
/// diverging run aborts the step instead of poisoning parameters.
pub fn total_generator_objective(
    tape: &mut Tape,
    gan_g_y: Value,
    gan_f_x: Value,
    gan_g_z: Value,
    cyc: Value,
    perc: Value,
    w: &LossWeights,
) -> Result<Value> {
    for (v, name) in [
        (gan_g_y, "gan_g_y"),
        (gan_f_x, "gan_f_x"),
        (gan_g_z, "gan_g_z"),
        (cyc, "cyc"),
        (perc, "perc"),
    ] {
        if !tape.value(v).all_finite() {
            return Err(Error::NonFinite(name.into()));
        }
    }
    let adv = tape.add(gan_g_y, gan_f_x);
    let adv = tape.add(adv, gan_g_z);
    let wc = tape.affine(cyc, w.lambda_cyc, 0.0);
    let wp = tape.affine(perc, w.kappa_perc, 0.0);
    let t = tape.add(adv, wc);
    Ok(tape.add(t, wp))
}
