//! Block-level no-reference quality estimation.
//!
//! The luminance map is cropped (top-left) to multiples of 16, converted to
//! MSCN coefficients, and split into 16×16 blocks. A block is *active* when
//! its coefficient variance exceeds 0.1; active blocks are then classified:
//!
//! * *distorted* — any sliding length-6 segment along the four block edges
//!   has a sample standard deviation below 0.1 (blockiness / over-smoothing);
//! * otherwise *noisy* — the block deviation exceeds twice the
//!   center-surround contrast β = |σ − csd| / max(σ, csd), where csd is the
//!   ratio of the deviation of the two center columns to that of the rest.
//!
//! Distorted blocks contribute 1 − v (v = block variance) to the distortion
//! sum D, noisy blocks contribute v, and the score is
//! 100·(D + 1)/(N_active + 1). Higher is worse; an image with no active
//! blocks scores exactly 100 with `no_active_blocks` set.

use super::luminance_255;
use super::mscn::compute_mscn;
use crate::data::Frame;
use crate::error::{Error, Result};

pub const PIQE_BLOCK: usize = 16;
pub const PIQE_MIN_DIM: usize = 32;
const ACTIVITY_THRESHOLD: f64 = 0.1;
const IMPAIRED_THRESHOLD: f64 = 0.1;
const SEGMENT_LEN: usize = 6;

#[derive(Debug, Clone)]
pub struct PiqeResult {
    /// 100·(D + 1)/(N_active + 1); higher means more distorted.
    pub score: f64,
    /// True when no block cleared the activity threshold (score is 100).
    pub no_active_blocks: bool,
    pub blocks_h: usize,
    pub blocks_w: usize,
    /// Row-major block masks, each of length `blocks_h * blocks_w`.
    pub active: Vec<bool>,
    pub distorted: Vec<bool>,
    pub noisy: Vec<bool>,
}

fn var_ddof1(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}

fn std_ddof1(xs: &[f64]) -> f64 {
    var_ddof1(xs).sqrt()
}

/// Any low-deviation segment along the four block edges marks the block as
/// noticeably distorted.
fn is_distorted(block: &[f64]) -> bool {
    let edges: [Vec<f64>; 4] = [
        (0..PIQE_BLOCK).map(|j| block[j]).collect(),
        (0..PIQE_BLOCK)
            .map(|j| block[(PIQE_BLOCK - 1) * PIQE_BLOCK + j])
            .collect(),
        (0..PIQE_BLOCK).map(|i| block[i * PIQE_BLOCK]).collect(),
        (0..PIQE_BLOCK)
            .map(|i| block[i * PIQE_BLOCK + PIQE_BLOCK - 1])
            .collect(),
    ];
    edges.iter().any(|edge| {
        edge.windows(SEGMENT_LEN)
            .any(|seg| std_ddof1(seg) < IMPAIRED_THRESHOLD)
    })
}

/// Center-surround deviation ratio: the two middle columns against the
/// remaining fourteen.
fn center_surround_dev(block: &[f64]) -> f64 {
    let mid = PIQE_BLOCK / 2;
    let (mut center, mut surround) = (Vec::with_capacity(32), Vec::with_capacity(224));
    for i in 0..PIQE_BLOCK {
        for j in 0..PIQE_BLOCK {
            if j == mid - 1 || j == mid {
                center.push(block[i * PIQE_BLOCK + j]);
            } else {
                surround.push(block[i * PIQE_BLOCK + j]);
            }
        }
    }
    let ratio = std_ddof1(&center) / std_ddof1(&surround);
    if ratio.is_finite() {
        ratio
    } else {
        0.0
    }
}

fn is_noisy(block: &[f64], variance: f64) -> bool {
    let sigma = variance.sqrt();
    let csd = center_surround_dev(block);
    let beta = (sigma - csd).abs() / sigma.max(csd);
    sigma > 2.0 * beta
}

pub fn piqe_score(frame: &Frame) -> Result<PiqeResult> {
    let gray = luminance_255(frame);
    let (h, w) = (gray.shape()[0], gray.shape()[1]);
    if h < PIQE_MIN_DIM || w < PIQE_MIN_DIM {
        return Err(Error::Size(format!(
            "{}x{} image is below the {}x{} minimum",
            h, w, PIQE_MIN_DIM, PIQE_MIN_DIM
        )));
    }
    let (ch, cw) = (h - h % PIQE_BLOCK, w - w % PIQE_BLOCK);
    let cropped = crate::tensor::Tensor::new(
        &[ch, cw],
        (0..ch)
            .flat_map(|i| gray.data()[i * w..i * w + cw].to_vec())
            .collect(),
    );
    let mscn = compute_mscn(&cropped)?;
    let m = mscn.data();

    let (blocks_h, blocks_w) = (ch / PIQE_BLOCK, cw / PIQE_BLOCK);
    let n_blocks = blocks_h * blocks_w;
    let mut active = vec![false; n_blocks];
    let mut distorted = vec![false; n_blocks];
    let mut noisy = vec![false; n_blocks];
    let mut distortion_sum = 0.0;
    let mut n_active = 0usize;
    let mut block = vec![0.0; PIQE_BLOCK * PIQE_BLOCK];
    for bi in 0..blocks_h {
        for bj in 0..blocks_w {
            for i in 0..PIQE_BLOCK {
                let row = (bi * PIQE_BLOCK + i) * cw + bj * PIQE_BLOCK;
                block[i * PIQE_BLOCK..(i + 1) * PIQE_BLOCK]
                    .copy_from_slice(&m[row..row + PIQE_BLOCK]);
            }
            let v = var_ddof1(&block);
            if v <= ACTIVITY_THRESHOLD {
                continue;
            }
            let idx = bi * blocks_w + bj;
            active[idx] = true;
            n_active += 1;
            if is_distorted(&block) {
                distorted[idx] = true;
                distortion_sum += 1.0 - v;
            } else if is_noisy(&block, v) {
                noisy[idx] = true;
                distortion_sum += v;
            }
        }
    }
    Ok(PiqeResult {
        score: 100.0 * (distortion_sum + 1.0) / (n_active as f64 + 1.0),
        no_active_blocks: n_active == 0,
        blocks_h,
        blocks_w,
        active,
        distorted,
        noisy,
    })
}
