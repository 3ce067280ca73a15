//! Mean-subtracted contrast-normalized (MSCN) coefficients.
//!
//! The front end both quality scorers share: local luminance statistics
//! under a 7×7 Gaussian window (σ = 7/6, sampled at integer offsets and
//! normalized), reflect padding at the borders, and the stabilizer C = 1 on
//! the 0–255 intensity scale:
//!
//! ```text
//! mscn(i,j) = (I(i,j) − μ(i,j)) / (σ(i,j) + 1)
//! ```

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MSCN_WINDOW: usize = 7;
pub const MSCN_SIGMA: f64 = 7.0 / 6.0;
pub const MSCN_C: f64 = 1.0;

/// The four neighbor offsets whose products feed the asymmetric fits:
/// horizontal, vertical, main diagonal, anti-diagonal.
pub const ORIENTATIONS: [(usize, isize); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];

/// Edge-inclusive mirror index (…2,1,0 | 0,1,2…).
fn reflect(i: isize, n: isize) -> usize {
    let mut i = i;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

fn window_1d() -> [f64; MSCN_WINDOW] {
    let r = (MSCN_WINDOW / 2) as isize;
    let mut w = [0.0; MSCN_WINDOW];
    for (t, slot) in w.iter_mut().enumerate() {
        let d = (t as isize - r) as f64;
        *slot = (-d * d / (2.0 * MSCN_SIGMA * MSCN_SIGMA)).exp();
    }
    let sum: f64 = w.iter().sum();
    for slot in &mut w {
        *slot /= sum;
    }
    w
}

/// Separable Gaussian filter with reflect padding on an H×W map. Equivalent
/// to the full 2D windowed correlation because reflect padding is itself
/// separable.
fn gaussian_filter(src: &[f64], h: usize, w: usize) -> Vec<f64> {
    let k = window_1d();
    let r = (MSCN_WINDOW / 2) as isize;
    let mut mid = vec![0.0; src.len()];
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0;
            for (t, &kv) in k.iter().enumerate() {
                let jj = reflect(j as isize + t as isize - r, w as isize);
                acc += kv * src[i * w + jj];
            }
            mid[i * w + j] = acc;
        }
    }
    let mut out = vec![0.0; src.len()];
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0;
            for (t, &kv) in k.iter().enumerate() {
                let ii = reflect(i as isize + t as isize - r, h as isize);
                acc += kv * mid[ii * w + j];
            }
            out[i * w + j] = acc;
        }
    }
    out
}

/// MSCN coefficients of a grayscale map on the 0–255 scale.
pub fn compute_mscn(gray: &Tensor) -> Result<Tensor> {
    let shape = gray.shape();
    if shape.len() != 2 {
        return Err(Error::Shape(format!(
            "expected an HxW luminance map, got {:?}",
            shape
        )));
    }
    let (h, w) = (shape[0], shape[1]);
    if h < MSCN_WINDOW || w < MSCN_WINDOW {
        return Err(Error::Size(format!(
            "{}x{} image is smaller than the {}x{} window",
            h, w, MSCN_WINDOW, MSCN_WINDOW
        )));
    }
    let src = gray.data();
    let mu = gaussian_filter(src, h, w);
    let sq: Vec<f64> = src.iter().map(|v| v * v).collect();
    let musq = gaussian_filter(&sq, h, w);
    let out: Vec<f64> = (0..src.len())
        .map(|i| {
            let var = (musq[i] - mu[i] * mu[i]).max(0.0);
            (src[i] - mu[i]) / (var.sqrt() + MSCN_C)
        })
        .collect();
    Ok(Tensor::new(&[h, w], out))
}

/// Products of each coefficient with its neighbor along one orientation,
/// over valid (non-wrapping) pairs only.
pub fn pairwise_products(mscn: &Tensor, offset: (usize, isize)) -> Vec<f64> {
    let (h, w) = (mscn.shape()[0], mscn.shape()[1]);
    let d = mscn.data();
    let (di, dj) = offset;
    let (j_lo, j_hi) = if dj < 0 {
        (dj.unsigned_abs(), w)
    } else {
        (0, w - dj as usize)
    };
    let mut out = Vec::with_capacity((h - di) * (j_hi - j_lo));
    for i in 0..h - di {
        for j in j_lo..j_hi {
            let jn = (j as isize + dj) as usize;
            out.push(d[i * w + j] * d[(i + di) * w + jn]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_string_in_size_error_is_well_formed() {
        // `{0}` reuse in the format string above must render the window
        // size, not garbage.
        let tiny = Tensor::zeros(&[3, 3]);
        let msg = format!("{}", compute_mscn(&tiny).unwrap_err());
        assert!(msg.contains("3x3"), "got: {msg}");
        assert!(msg.contains('7'), "got: {msg}");
    }

    #[test]
    fn window_is_normalized_and_symmetric() {
        let w = window_1d();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for t in 0..3 {
            assert_eq!(w[t], w[6 - t]);
        }
        assert!(w[3] > w[2] && w[2] > w[1] && w[1] > w[0]);
    }

    #[test]
    fn constant_image_has_all_zero_coefficients() {
        let g = Tensor::full(&[16, 20], 173.0);
        let m = compute_mscn(&g).unwrap();
        for &v in m.data() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn checkerboard_matches_dense_windowed_moments_oracle() {
        // ±1 about 128 on the 0–255 scale. The oracle recomputes μ and σ by
        // explicit 7×7 accumulation with its own reflect indexing.
        let (h, w) = (20usize, 24usize);
        let data: Vec<f64> = (0..h * w)
            .map(|k| {
                let (i, j) = (k / w, k % w);
                128.0 + if (i + j) % 2 == 0 { 1.0 } else { -1.0 }
            })
            .collect();
        let fast = compute_mscn(&Tensor::new(&[h, w], data.clone())).unwrap();

        let k1 = window_1d();
        for i in 0..h as isize {
            for j in 0..w as isize {
                let (mut mu, mut ex2) = (0.0, 0.0);
                for di in -3isize..=3 {
                    for dj in -3isize..=3 {
                        let wgt = k1[(di + 3) as usize] * k1[(dj + 3) as usize];
                        let v = data[reflect(i + di, h as isize) * w + reflect(j + dj, w as isize)];
                        mu += wgt * v;
                        ex2 += wgt * v * v;
                    }
                }
                let sigma = (ex2 - mu * mu).max(0.0).sqrt();
                let want = (data[i as usize * w + j as usize] - mu) / (sigma + 1.0);
                let got = fast.data()[i as usize * w + j as usize];
                assert!(
                    (got - want).abs() < 1e-6,
                    "at ({}, {}): {} vs {}",
                    i,
                    j,
                    got,
                    want
                );
            }
        }
    }

    #[test]
    fn products_cover_only_valid_pairs() {
        // 3×4 map with distinct values; check counts and a few hand-picked
        // products per orientation, including the anti-diagonal.
        let m = Tensor::new(&[3, 4], (0..12).map(|v| v as f64).collect::<Vec<_>>());
        let h = pairwise_products(&m, (0, 1));
        assert_eq!(h.len(), 3 * 3);
        assert_eq!(h[0], 0.0 * 1.0);
        let v = pairwise_products(&m, (1, 0));
        assert_eq!(v.len(), 2 * 4);
        assert_eq!(v[0], 0.0 * 4.0);
        let d1 = pairwise_products(&m, (1, 1));
        assert_eq!(d1.len(), 2 * 3);
        assert_eq!(d1[0], 0.0 * 5.0);
        let d2 = pairwise_products(&m, (1, -1));
        assert_eq!(d2.len(), 2 * 3);
        // First d2 product pairs (0,1) with (1,0).
        assert_eq!(d2[0], 1.0 * 4.0);
        assert_eq!(*d2.last().unwrap(), 7.0 * 10.0);
    }

    #[test]
    fn mscn_of_a_noisy_map_is_roughly_centered() {
        use rand::{Rng as _, SeedableRng as _};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..64 * 64).map(|_| rng.gen_range(0.0..255.0)).collect();
        let m = compute_mscn(&Tensor::new(&[64, 64], data)).unwrap();
        let mean = m.data().iter().sum::<f64>() / m.len() as f64;
        assert!(mean.abs() < 0.1, "mean {}", mean);
    }
}
