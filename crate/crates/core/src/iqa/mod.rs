//! No-reference image quality assessment.
//!
//! Two scorers over the same MSCN front end:
//!
//! * [`brisque_features`] — 36 natural-scene statistics (per scale: GGD
//!   shape/variance of the coefficients, then asymmetric fits over the four
//!   neighbor-product orientations), scored against a trained
//!   support-vector regressor when a model file is available;
//! * [`piqe_score`] — training-free block-level distortion estimate with
//!   per-block artifact masks.
//!
//! Both are pure functions of the pixels: no RNG, no hidden state, and
//! repeated calls return identical values. Higher scores mean worse quality
//! for both.

mod ggd;
mod mscn;
mod piqe;
mod svr;

pub use ggd::{fit_aggd, fit_ggd, gamma, AggdFit, GgdFit, ALPHA_MAX, ALPHA_MIN};
pub use mscn::{compute_mscn, pairwise_products, MSCN_C, MSCN_SIGMA, MSCN_WINDOW, ORIENTATIONS};
pub use piqe::{piqe_score, PiqeResult, PIQE_BLOCK, PIQE_MIN_DIM};
pub use svr::SvrModel;

use crate::data::{manifest::list_pngs, Frame, Resample};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Length of the feature vector: 2 scales × (2 GGD + 4 orientations × 4
/// AGGD parameters).
pub const BRISQUE_FEATURES: usize = 36;

/// Rec. 601 luminance on the 0–255 scale.
pub fn luminance_255(frame: &Frame) -> Tensor {
    let unit = frame.to_unit();
    let px = unit.pixels().data();
    let shape = unit.pixels().shape();
    let (h, w) = (shape[0], shape[1]);
    let gray: Vec<f64> = (0..h * w)
        .map(|k| 255.0 * (0.299 * px[3 * k] + 0.587 * px[3 * k + 1] + 0.114 * px[3 * k + 2]))
        .collect();
    Tensor::new(&[h, w], gray)
}

/// Bilinear downscale of a grayscale map to floor-halved dimensions, using
/// the same half-pixel-center tap convention as the frame resizer.
fn gray_halve(gray: &Tensor) -> Tensor {
    let (h, w) = (gray.shape()[0], gray.shape()[1]);
    let (oh, ow) = ((h / 2).max(1), (w / 2).max(1));
    let src = gray.data();
    let col_taps = crate::data::degrade::resample_taps(w, ow, Resample::Bilinear);
    let mut mid = vec![0.0; h * ow];
    for i in 0..h {
        for (j, (start, weights)) in col_taps.iter().enumerate() {
            mid[i * ow + j] = weights
                .iter()
                .enumerate()
                .map(|(t, &wt)| wt * src[i * w + start + t])
                .sum();
        }
    }
    let row_taps = crate::data::degrade::resample_taps(h, oh, Resample::Bilinear);
    let mut out = vec![0.0; oh * ow];
    for (i, (start, weights)) in row_taps.iter().enumerate() {
        for j in 0..ow {
            out[i * ow + j] = weights
                .iter()
                .enumerate()
                .map(|(t, &wt)| wt * mid[(start + t) * ow + j])
                .sum();
        }
    }
    Tensor::new(&[oh, ow], out)
}

/// Natural-scene statistics at full and half scale.
pub fn brisque_features(frame: &Frame) -> Result<[f64; BRISQUE_FEATURES]> {
    let mut gray = luminance_255(frame);
    let mut feats = Vec::with_capacity(BRISQUE_FEATURES);
    for scale in 0..2 {
        if scale == 1 {
            gray = gray_halve(&gray);
        }
        let mscn = compute_mscn(&gray)?;
        let ggd = fit_ggd(mscn.data())?;
        feats.push(ggd.alpha);
        feats.push(ggd.sigma * ggd.sigma);
        for offset in ORIENTATIONS {
            let prods = pairwise_products(&mscn, offset);
            let fit = fit_aggd(&prods)?;
            feats.extend([
                fit.alpha,
                fit.mean_offset,
                fit.sigma_l * fit.sigma_l,
                fit.sigma_r * fit.sigma_r,
            ]);
        }
    }
    Ok(feats.try_into().expect("fixed feature count"))
}

/// Regression score for a feature vector; higher means worse quality.
pub fn brisque_score(features: &[f64; BRISQUE_FEATURES], model: &SvrModel) -> Result<f64> {
    model.predict(features)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IqaRow {
    /// File name within the evaluated directory.
    pub path: String,
    pub brisque: Option<f64>,
    pub piqe: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IqaReport {
    pub rows: Vec<IqaRow>,
    /// Mean over the rows where the score is present.
    pub mean_brisque: Option<f64>,
    pub mean_piqe: Option<f64>,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl IqaReport {
    pub fn from_rows(rows: Vec<IqaRow>) -> IqaReport {
        let mean_brisque = mean_of(rows.iter().filter_map(|r| r.brisque));
        let mean_piqe = mean_of(rows.iter().filter_map(|r| r.piqe));
        IqaReport {
            rows,
            mean_brisque,
            mean_piqe,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("path,brisque,piqe,error\n");
        for r in &self.rows {
            let fmt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{}\n",
                csv_field(&r.path),
                fmt(r.brisque),
                fmt(r.piqe),
                csv_field(r.error.as_deref().unwrap_or(""))
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }
}

/// Score every PNG in a directory, sorted by file name. Per-file failures
/// become row-level `error` entries rather than aborting the run; the
/// regression column is filled only when a model is supplied.
pub fn evaluate_dir(dir: &Path, model: Option<&SvrModel>) -> Result<IqaReport> {
    let files = list_pngs(dir)?;
    if files.is_empty() {
        return Err(Error::EmptyDomain(format!(
            "{} (no PNG files)",
            dir.display()
        )));
    }
    let mut rows = Vec::with_capacity(files.len());
    for path in files {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let mut errors = Vec::new();
        let (mut brisque, mut piqe) = (None, None);
        match Frame::load_png(&path) {
            Err(e) => errors.push(e.to_string()),
            Ok(frame) => {
                match piqe_score(&frame) {
                    Ok(r) => piqe = Some(r.score),
                    Err(e) => errors.push(e.to_string()),
                }
                if let Some(m) = model {
                    match brisque_features(&frame).and_then(|f| brisque_score(&f, m)) {
                        Ok(s) => brisque = Some(s),
                        Err(e) => errors.push(e.to_string()),
                    }
                }
            }
        }
        rows.push(IqaRow {
            path: name,
            brisque,
            piqe,
            error: (!errors.is_empty()).then(|| errors.join("; ")),
        });
    }
    Ok(IqaReport::from_rows(rows))
}
