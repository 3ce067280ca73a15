//! Synthetic degradation: the clean-domain frame y becomes its
//! low-resolution counterpart z by Gaussian blur and downscaling.
//!
//! Conventions pinned here (and relied on by the golden tests):
//! - blur uses symmetric reflect padding (edge-inclusive mirror:
//!   index -1 maps to 0), which preserves the mean exactly for a
//!   normalized kernel
//! - the kernel is the Gaussian density sampled at integer offsets and
//!   normalized to sum 1
//! - resampling maps pixel centers ((j + 0.5)·ratio - 0.5) and clamps at
//!   the borders; downscaling widens the filter support by the scale ratio
//!   (antialiasing), upscaling uses the base support

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::frame::{Frame, ValueRange};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resample {
    /// Catmull-Rom cubic (a = -0.5), support 2.
    #[default]
    Bicubic,
    /// Triangle filter, support 1.
    Bilinear,
}

impl Resample {
    fn support(self) -> f64 {
        match self {
            Resample::Bicubic => 2.0,
            Resample::Bilinear => 1.0,
        }
    }

    fn kernel(self, x: f64) -> f64 {
        let x = x.abs();
        match self {
            Resample::Bilinear => {
                if x < 1.0 {
                    1.0 - x
                } else {
                    0.0
                }
            }
            Resample::Bicubic => {
                if x <= 1.0 {
                    (1.5 * x - 2.5) * x * x + 1.0
                } else if x < 2.0 {
                    ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DegradationConfig {
    pub blur_sigma: f64,
    /// Taps per side; `None` derives ceil(2·blur_sigma).
    pub kernel_radius: Option<usize>,
    pub scale_factor: usize,
    pub resample: Resample,
    /// Upscale z back to y's dimensions so the pair stays pixel-aligned.
    pub restore_size: bool,
}

impl Default for DegradationConfig {
    fn default() -> Self {
        DegradationConfig {
            blur_sigma: 2.0,
            kernel_radius: None,
            scale_factor: 4,
            resample: Resample::default(),
            restore_size: true,
        }
    }
}

impl DegradationConfig {
    pub fn effective_radius(&self) -> usize {
        self.kernel_radius
            .unwrap_or((2.0 * self.blur_sigma).ceil() as usize)
            .max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale_factor < 2 {
            return Err(Error::Config(format!(
                "scale_factor must be at least 2, got {}",
                self.scale_factor
            )));
        }
        if !(self.blur_sigma > 0.0) {
            return Err(Error::Config(format!(
                "blur_sigma must be positive, got {}",
                self.blur_sigma
            )));
        }
        Ok(())
    }
}

/// Gaussian density sampled at integer offsets -radius..=radius, normalized.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let mut k: Vec<f64> = (-(radius as isize)..=radius as isize)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Edge-inclusive mirror: ... 2 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
fn reflect(mut i: isize, n: isize) -> usize {
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Separable Gaussian blur with reflect padding, per channel.
pub fn gaussian_blur(frame: &Frame, sigma: f64, radius: usize) -> Frame {
    let (h, w) = (frame.height(), frame.width());
    let k = gaussian_kernel(sigma, radius);
    let r = radius as isize;
    let src = frame.pixels().data();

    // Horizontal pass.
    let mut mid = vec![0.0; src.len()];
    for i in 0..h {
        for j in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (t, &kv) in k.iter().enumerate() {
                    let jj = reflect(j as isize + t as isize - r, w as isize);
                    acc += kv * src[(i * w + jj) * 3 + c];
                }
                mid[(i * w + j) * 3 + c] = acc;
            }
        }
    }
    // Vertical pass.
    let mut out = vec![0.0; src.len()];
    for i in 0..h {
        for j in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (t, &kv) in k.iter().enumerate() {
                    let ii = reflect(i as isize + t as isize - r, h as isize);
                    acc += kv * mid[(ii * w + j) * 3 + c];
                }
                out[(i * w + j) * 3 + c] = acc;
            }
        }
    }
    // A normalized kernel takes convex combinations, but rounding can land
    // a hair outside the range; scrub that before declaring it.
    let (lo, hi) = frame.range().bounds();
    for v in &mut out {
        *v = v.clamp(lo, hi);
    }
    Frame::from_resampled(
        Tensor::new(&[h, w, 3], out),
        frame.range(),
        frame.source_id.clone(),
    )
}

/// Precomputed sample positions and weights for one output coordinate.
pub(crate) fn resample_taps(
    in_len: usize,
    out_len: usize,
    method: Resample,
) -> Vec<(usize, Vec<f64>)> {
    let ratio = in_len as f64 / out_len as f64;
    let filterscale = ratio.max(1.0);
    let support = method.support() * filterscale;
    (0..out_len)
        .map(|j| {
            let center = (j as f64 + 0.5) * ratio - 0.5;
            let lo = ((center - support).floor() as isize).max(0) as usize;
            let hi = ((center + support).ceil() as isize).min(in_len as isize - 1) as usize;
            let mut weights: Vec<f64> = (lo..=hi)
                .map(|i| method.kernel((i as f64 - center) / filterscale))
                .collect();
            let sum: f64 = weights.iter().sum();
            if sum != 0.0 {
                for wv in &mut weights {
                    *wv /= sum;
                }
            }
            (lo, weights)
        })
        .collect()
}

/// Separable resize to an exact target size. Antialiases on downscale.
pub fn resize(frame: &Frame, out_h: usize, out_w: usize, method: Resample) -> Result<Frame> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Size("resize target must be nonzero".into()));
    }
    let (h, w) = (frame.height(), frame.width());
    let src = frame.pixels().data();

    // Horizontal pass: h × out_w.
    let taps_w = resample_taps(w, out_w, method);
    let mut mid = vec![0.0; h * out_w * 3];
    for i in 0..h {
        for (j, (lo, weights)) in taps_w.iter().enumerate() {
            for c in 0..3 {
                let mut acc = 0.0;
                for (t, &wv) in weights.iter().enumerate() {
                    acc += wv * src[(i * w + lo + t) * 3 + c];
                }
                mid[(i * out_w + j) * 3 + c] = acc;
            }
        }
    }
    // Vertical pass: out_h × out_w.
    let taps_h = resample_taps(h, out_h, method);
    let mut out = vec![0.0; out_h * out_w * 3];
    for (i, (lo, weights)) in taps_h.iter().enumerate() {
        for j in 0..out_w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (t, &wv) in weights.iter().enumerate() {
                    acc += wv * mid[((lo + t) * out_w + j) * 3 + c];
                }
                out[(i * out_w + j) * 3 + c] = acc;
            }
        }
    }
    // Cubic kernels overshoot; keep the declared range honest.
    let (lo, hi) = frame.range().bounds();
    for v in &mut out {
        *v = v.clamp(lo, hi);
    }
    Ok(Frame::from_resampled(
        Tensor::new(&[out_h, out_w, 3], out),
        frame.range(),
        frame.source_id.clone(),
    ))
}

/// Largest centered window whose dims are multiples of `m`.
pub fn center_crop_to_multiple(frame: &Frame, m: usize) -> Result<Frame> {
    let (h, w) = (frame.height(), frame.width());
    let (h2, w2) = (h - h % m, w - w % m);
    if h2 == 0 || w2 == 0 {
        return Err(Error::Size(format!(
            "{}x{} frame has no {}-multiple window",
            h, w, m
        )));
    }
    if h2 == h && w2 == w {
        return Ok(frame.clone());
    }
    frame.crop((h - h2) / 2, (w - w2) / 2, h2, w2)
}

/// Blur + downscale (+ optional restore) producing the degraded counterpart
/// of a clean frame. The output is center-cropped to a scale-factor multiple
/// of the input, so callers pairing z with y must crop y identically — see
/// [`center_crop_to_multiple`].
pub fn synthesize_lowres(y: &Frame, cfg: &DegradationConfig) -> Result<Frame> {
    cfg.validate()?;
    if y.range() != ValueRange::Unit {
        return Err(Error::Config(
            "synthesize_lowres expects a unit-range frame".into(),
        ));
    }
    let radius = cfg.effective_radius();
    let cropped = center_crop_to_multiple(y, cfg.scale_factor)?;
    let (h, w) = (cropped.height(), cropped.width());
    if h < 2 * radius + 1 || w < 2 * radius + 1 {
        return Err(Error::Size(format!(
            "{}x{} frame is smaller than the {}-tap blur kernel",
            h,
            w,
            2 * radius + 1
        )));
    }
    let blurred = gaussian_blur(&cropped, cfg.blur_sigma, radius);
    let small = resize(
        &blurred,
        h / cfg.scale_factor,
        w / cfg.scale_factor,
        cfg.resample,
    )?;
    if cfg.restore_size {
        resize(&small, h, w, cfg.resample)
    } else {
        Ok(small)
    }
}
