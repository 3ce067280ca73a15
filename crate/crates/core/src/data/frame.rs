//! Frames: H×W×3 floating-point images with an explicit value range.
//!
//! Files on disk are 8-bit PNG; in memory a frame is f64 in either the unit
//! range [0,1] (I/O, quality metrics) or the signed range [-1,1] (network
//! traffic). The round trip file -> unit frame -> file is lossless for 8-bit
//! sources.

use std::path::Path;

use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MIN_DIM: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueRange {
    Unit,
    Signed,
}

impl ValueRange {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            ValueRange::Unit => (0.0, 1.0),
            ValueRange::Signed => (-1.0, 1.0),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Frame {
    pixels: Tensor,
    range: ValueRange,
    pub source_id: String,
}

impl Frame {
    /// Wrap an H×W×3 tensor, validating dimensions and range containment.
    pub fn from_pixels(pixels: Tensor, range: ValueRange, source_id: String) -> Result<Frame> {
        let shape = pixels.shape();
        if shape.len() != 3 || shape[2] != 3 {
            return Err(Error::Shape(format!(
                "frame must be HxWx3, got {:?}",
                shape
            )));
        }
        if shape[0] < MIN_DIM || shape[1] < MIN_DIM {
            return Err(Error::Size(format!(
                "frame {}x{} below the {}x{} minimum",
                shape[0], shape[1], MIN_DIM, MIN_DIM
            )));
        }
        let (lo, hi) = range.bounds();
        if !pixels.data().iter().all(|&v| (lo..=hi).contains(&v)) {
            return Err(Error::Size(format!(
                "pixel values escape the declared {:?} range",
                range
            )));
        }
        Ok(Frame {
            pixels,
            range,
            source_id,
        })
    }

    /// Internal constructor for resample products, which may legitimately
    /// drop below the dataset minimum (e.g. a 4x downscale of a small clip).
    /// Shape must still be H×W×3 and values must fit the declared range.
    pub(crate) fn from_resampled(
        pixels: Tensor,
        range: ValueRange,
        source_id: String,
    ) -> Frame {
        let shape = pixels.shape();
        debug_assert!(shape.len() == 3 && shape[2] == 3, "frame must be HxWx3");
        let (lo, hi) = range.bounds();
        debug_assert!(
            pixels.data().iter().all(|&v| (lo..=hi).contains(&v)),
            "resampled pixels escape the declared range"
        );
        Frame {
            pixels,
            range,
            source_id,
        }
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn range(&self) -> ValueRange {
        self.range
    }

    pub fn pixels(&self) -> &Tensor {
        &self.pixels
    }

    pub fn load_png(path: &Path) -> Result<Frame> {
        let img = image::open(path)
            .map_err(|e| Error::image(path, e))?
            .to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data: Vec<f64> = img.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
        let source_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Frame::from_pixels(Tensor::new(&[h, w, 3], data), ValueRange::Unit, source_id)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let unit = self.to_unit();
        let bytes: Vec<u8> = unit
            .pixels
            .data()
            .iter()
            .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        let img = RgbImage::from_raw(self.width() as u32, self.height() as u32, bytes)
            .expect("buffer length matches dims");
        img.save_with_format(path, ImageFormat::Png)
            .map_err(|e| Error::image(path, e))
    }

    pub fn to_unit(&self) -> Frame {
        match self.range {
            ValueRange::Unit => self.clone(),
            ValueRange::Signed => Frame {
                pixels: self.pixels.map(|v| (v + 1.0) / 2.0),
                range: ValueRange::Unit,
                source_id: self.source_id.clone(),
            },
        }
    }

    pub fn to_signed(&self) -> Frame {
        match self.range {
            ValueRange::Signed => self.clone(),
            ValueRange::Unit => Frame {
                pixels: self.pixels.map(|v| 2.0 * v - 1.0),
                range: ValueRange::Signed,
                source_id: self.source_id.clone(),
            },
        }
    }

    /// Extract a window. The result must still satisfy the minimum size.
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Frame> {
        if top + h > self.height() || left + w > self.width() {
            return Err(Error::Size(format!(
                "crop {}x{}+{}+{} escapes a {}x{} frame",
                h,
                w,
                top,
                left,
                self.height(),
                self.width()
            )));
        }
        let src = self.pixels.data();
        let stride = self.width() * 3;
        let mut out = Vec::with_capacity(h * w * 3);
        for i in 0..h {
            let row = (top + i) * stride + left * 3;
            out.extend_from_slice(&src[row..row + w * 3]);
        }
        Frame::from_pixels(Tensor::new(&[h, w, 3], out), self.range, self.source_id.clone())
    }

    pub fn hflip(&self) -> Frame {
        let (h, w) = (self.height(), self.width());
        let src = self.pixels.data();
        let mut out = vec![0.0; src.len()];
        for i in 0..h {
            for j in 0..w {
                let s = (i * w + j) * 3;
                let d = (i * w + (w - 1 - j)) * 3;
                out[d..d + 3].copy_from_slice(&src[s..s + 3]);
            }
        }
        Frame {
            pixels: Tensor::new(&[h, w, 3], out),
            range: self.range,
            source_id: self.source_id.clone(),
        }
    }

    /// Copy this frame's channels-first data into slot `n` of an NCHW batch.
    pub fn write_into_batch(&self, batch: &mut Tensor, n: usize) {
        let (h, w) = (self.height(), self.width());
        let src = self.pixels.data();
        let plane = h * w;
        let dst = &mut batch.data_mut()[n * 3 * plane..(n + 1) * 3 * plane];
        for i in 0..h {
            for j in 0..w {
                let s = (i * w + j) * 3;
                for c in 0..3 {
                    dst[c * plane + i * w + j] = src[s + c];
                }
            }
        }
    }

    /// Rebuild a frame from slot `n` of an NCHW batch tensor.
    pub fn from_batch_slot(
        batch: &Tensor,
        n: usize,
        range: ValueRange,
        source_id: String,
    ) -> Result<Frame> {
        let (bn, c, h, w) = batch.dims4()?;
        if n >= bn || c != 3 {
            return Err(Error::Shape(format!(
                "slot {} of batch {:?} is not an RGB frame",
                n,
                batch.shape()
            )));
        }
        let plane = h * w;
        let src = &batch.data()[n * 3 * plane..(n + 1) * 3 * plane];
        let mut out = vec![0.0; 3 * plane];
        for i in 0..h {
            for j in 0..w {
                for ch in 0..3 {
                    out[(i * w + j) * 3 + ch] = src[ch * plane + i * w + j];
                }
            }
        }
        Frame::from_pixels(Tensor::new(&[h, w, 3], out), range, source_id)
    }
}

/// Peak signal-to-noise ratio between two same-sized frames, in dB over the
/// unit range. Identical frames give +infinity.
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::Shape(format!(
            "psnr operands disagree: {}x{} vs {}x{}",
            a.height(),
            a.width(),
            b.height(),
            b.width()
        )));
    }
    let (ua, ub) = (a.to_unit(), b.to_unit());
    let mse: f64 = ua
        .pixels
        .data()
        .iter()
        .zip(ub.pixels.data())
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        / ua.pixels.len() as f64;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(-10.0 * mse.log10())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng as _, SeedableRng as _};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn noise_frame(seed: u64, h: usize, w: usize) -> Frame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Quantized to 8 bits so save/load comparisons are exact.
        let data: Vec<f64> = (0..h * w * 3)
            .map(|_| rng.gen_range(0u8..=255) as f64 / 255.0)
            .collect();
        Frame::from_pixels(Tensor::new(&[h, w, 3], data), ValueRange::Unit, "noise".into())
            .unwrap()
    }

    #[test]
    fn png_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.png");
        let f = noise_frame(1, 24, 32);
        f.save_png(&path).unwrap();
        let g = Frame::load_png(&path).unwrap();
        assert_eq!(f.pixels().data(), g.pixels().data());
        assert_eq!(g.source_id, "f");
    }

    #[test]
    fn range_conversions_are_inverses() {
        let f = noise_frame(2, 16, 16);
        let back = f.to_signed().to_unit();
        for (a, b) in f.pixels().data().iter().zip(back.pixels().data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn undersized_and_escaping_frames_are_rejected() {
        let t = Tensor::zeros(&[8, 32, 3]);
        assert!(matches!(
            Frame::from_pixels(t, ValueRange::Unit, String::new()),
            Err(Error::Size(_))
        ));
        let t = Tensor::full(&[16, 16, 3], 1.5);
        assert!(matches!(
            Frame::from_pixels(t, ValueRange::Unit, String::new()),
            Err(Error::Size(_))
        ));
        let t = Tensor::zeros(&[16, 16, 2]);
        assert!(matches!(
            Frame::from_pixels(t, ValueRange::Unit, String::new()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn crop_and_flip_move_the_right_pixels() {
        let f = noise_frame(3, 20, 30);
        let c = f.crop(2, 4, 16, 16).unwrap();
        assert_eq!(c.height(), 16);
        // Pixel (0,0) of the crop is (2,4) of the source.
        let src = f.pixels().data();
        let got = c.pixels().data();
        assert_eq!(got[0], src[(2 * 30 + 4) * 3]);

        let flipped = f.hflip();
        let fd = flipped.pixels().data();
        assert_eq!(fd[0..3], src[29 * 3..30 * 3]);
        // Flipping twice is the identity.
        assert_eq!(f.hflip().hflip().pixels().data(), src);
    }

    #[test]
    fn batch_round_trip_preserves_layout() {
        let f = noise_frame(4, 16, 20);
        let mut batch = Tensor::zeros(&[2, 3, 16, 20]);
        f.write_into_batch(&mut batch, 1);
        let back = Frame::from_batch_slot(&batch, 1, ValueRange::Unit, "b".into()).unwrap();
        assert_eq!(back.pixels().data(), f.pixels().data());
    }

    #[test]
    fn psnr_detects_identity_and_noise() {
        let f = noise_frame(5, 16, 16);
        assert_eq!(psnr(&f, &f).unwrap(), f64::INFINITY);
        let g = noise_frame(6, 16, 16);
        let v = psnr(&f, &g).unwrap();
        assert!(v.is_finite() && v > 0.0);
    }
}
