//! U-net translation generator.
//!
//! Encoder: stride-2 3x3 convolutions with leaky-rectifier activations,
//! instance normalization on every level except the first. Bottleneck: one
//! stride-1 block at the deepest resolution. Decoder: nearest-neighbor 2x
//! upsampling, concatenation with the matching encoder activation, then a
//! stride-1 3x3 block with rectifier activations. A final upsample + 3x3
//! convolution maps back to 3 channels through tanh, so outputs always lie
//! in [-1, 1].
//!
//! Cloning a `Generator` clones parameter *handles*: both clones read and
//! write the same storage. That is the mechanism behind the enhancement
//! branch sharing weights with G.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Param, Tape, Value};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::ModelConfig;

pub const INIT_STD: f64 = 0.02;
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    #[default]
    Instance,
    None,
}

#[derive(Clone, Copy)]
enum Act {
    Leaky,
    Relu,
    Tanh,
}

/// One conv -> (norm) -> activation unit.
#[derive(Clone)]
pub(super) struct ConvBlock {
    w: Param,
    b: Param,
    norm: Option<(Param, Param)>,
    stride: usize,
    act: Act,
}

impl ConvBlock {
    #[allow(clippy::too_many_arguments)]
    fn new(
        rng: &mut ChaCha8Rng,
        name: &str,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        norm: bool,
        act: Act,
    ) -> ConvBlock {
        let w = gaussian_param(rng, format!("{name}.w"), &[out_c, in_c, k, k], INIT_STD);
        let b = Param::new(format!("{name}.b"), Tensor::zeros(&[out_c]), true);
        let norm = norm.then(|| {
            (
                Param::new(format!("{name}.norm.g"), Tensor::full(&[out_c], 1.0), true),
                Param::new(format!("{name}.norm.b"), Tensor::zeros(&[out_c]), true),
            )
        });
        ConvBlock { w, b, norm, stride, act }
    }

    fn forward(&self, tape: &mut Tape, x: Value) -> Result<Value> {
        let mut cur = tape.conv2d(x, &self.w, Some(&self.b), self.stride, 1)?;
        if let Some((g, b)) = &self.norm {
            cur = tape.instance_norm(cur, g, b)?;
        }
        Ok(match self.act {
            Act::Leaky => tape.leaky_relu(cur, LEAKY_SLOPE),
            Act::Relu => tape.relu(cur),
            Act::Tanh => tape.tanh(cur),
        })
    }

    fn collect(&self, out: &mut Vec<Param>) {
        out.push(self.w.clone());
        out.push(self.b.clone());
        if let Some((g, b)) = &self.norm {
            out.push(g.clone());
            out.push(b.clone());
        }
    }
}

/// Zero-mean Gaussian initialization for convolution weights.
pub(super) fn gaussian_param(
    rng: &mut ChaCha8Rng,
    name: String,
    shape: &[usize],
    std: f64,
) -> Param {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Param::new(name, Tensor::new(shape, data), true)
}

#[derive(Clone)]
pub struct Generator {
    depth: usize,
    residual_bypass: bool,
    enc: Vec<ConvBlock>,
    mid: ConvBlock,
    dec: Vec<ConvBlock>,
    out: ConvBlock,
}

/// Channel width at encoder level `i` (1-based): base doubled per level,
/// capped.
pub fn level_channels(base: usize, max: usize, i: usize) -> usize {
    (base << (i - 1)).min(max)
}

impl Generator {
    pub fn new(prefix: &str, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Generator {
        let d = cfg.depth;
        let ch = |i: usize| level_channels(cfg.base_channels, cfg.max_channels, i);
        let norm = cfg.norm == NormKind::Instance;

        let mut enc = Vec::with_capacity(d);
        for i in 1..=d {
            let in_c = if i == 1 { 3 } else { ch(i - 1) };
            // The first encoder level is never normalized.
            enc.push(ConvBlock::new(
                rng,
                &format!("{prefix}.enc{i}"),
                in_c,
                ch(i),
                3,
                2,
                norm && i > 1,
                Act::Leaky,
            ));
        }
        let mid = ConvBlock::new(rng, &format!("{prefix}.mid"), ch(d), ch(d), 3, 1, norm, Act::Leaky);
        // Decoder blocks produce levels d-1 .. 1; each consumes the
        // upsampled deeper activation concatenated with the skip at its
        // level.
        let mut dec = Vec::with_capacity(d.saturating_sub(1));
        for i in (1..d).rev() {
            dec.push(ConvBlock::new(
                rng,
                &format!("{prefix}.dec{i}"),
                ch(i + 1) + ch(i),
                ch(i),
                3,
                1,
                norm,
                Act::Relu,
            ));
        }
        let out = ConvBlock::new(rng, &format!("{prefix}.out"), ch(1), 3, 3, 1, false, Act::Tanh);

        Generator {
            depth: d,
            residual_bypass: cfg.residual_bypass,
            enc,
            mid,
            dec,
            out,
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// H×W×3 -> H×W×3 in the signed range, for dims divisible by 2^depth.
    pub fn forward(&self, tape: &mut Tape, x: Value) -> Result<Value> {
        let (_, c, h, w) = tape.value(x).dims4()?;
        if c != 3 {
            return Err(Error::Shape(format!(
                "generator expects 3 input channels, got {}",
                c
            )));
        }
        let m = 1usize << self.depth;
        if h % m != 0 || w % m != 0 {
            return Err(Error::Shape(format!(
                "generator input {}x{} must have spatial dims divisible by {} (2^depth for depth {})",
                h, w, m, self.depth
            )));
        }

        let mut skips = Vec::with_capacity(self.depth.saturating_sub(1));
        let mut cur = x;
        for (i, blk) in self.enc.iter().enumerate() {
            cur = blk.forward(tape, cur)?;
            if i + 1 < self.depth {
                skips.push(cur);
            }
        }
        cur = self.mid.forward(tape, cur)?;
        for (j, blk) in self.dec.iter().enumerate() {
            cur = tape.upsample2(cur)?;
            let skip = skips[self.depth - 2 - j];
            let cat = tape.concat_c(cur, skip)?;
            cur = blk.forward(tape, cat)?;
        }
        cur = tape.upsample2(cur)?;
        let core = self.out.forward(tape, cur)?;
        if self.residual_bypass {
            // Diagnostic mode: the network learns a correction on top of the
            // input, clipped back to the signed range.
            let sum = tape.add(x, core);
            Ok(tape.clamp(sum, -1.0, 1.0))
        } else {
            Ok(core)
        }
    }

    /// Run without keeping gradient state (a throwaway tape).
    pub fn infer(&self, x: Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let v = tape.leaf(x);
        let y = self.forward(&mut tape, v)?;
        Ok(tape.value(y).clone())
    }

    pub fn params(&self) -> Vec<Param> {
        let mut out = Vec::new();
        for blk in &self.enc {
            blk.collect(&mut out);
        }
        self.mid.collect(&mut out);
        for blk in &self.dec {
            blk.collect(&mut out);
        }
        self.out.collect(&mut out);
        out
    }

    /// Final-layer parameters (used by diagnostics that zero the output).
    pub fn output_layer_params(&self) -> Vec<Param> {
        let mut out = Vec::new();
        self.out.collect(&mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::hash_params;
    use crate::models::ModelConfig;
    use proptest::prelude::*;
    use rand::SeedableRng as _;

    fn tiny_cfg(depth: usize, base: usize) -> ModelConfig {
        ModelConfig {
            depth,
            base_channels: base,
            ..ModelConfig::default()
        }
    }

    fn rand_frame(seed: u64, h: usize, w: usize) -> Tensor {
        use rand::Rng as _;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(
            &[1, 3, h, w],
            (0..3 * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
    }

    #[test]
    fn channel_table_doubles_and_caps() {
        let widths: Vec<usize> = (1..=6).map(|i| level_channels(64, 512, i)).collect();
        assert_eq!(widths, [64, 128, 256, 512, 512, 512]);
    }

    #[test]
    fn depth_six_maps_64x64_to_64x64() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = Generator::new("G", &tiny_cfg(6, 8), &mut rng);
        let out = g.infer(rand_frame(1, 64, 64)).unwrap();
        assert_eq!(out.shape(), &[1, 3, 64, 64]);
        assert!(out.data().iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }

    #[test]
    fn indivisible_dims_error_names_the_required_multiple() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = Generator::new("G", &tiny_cfg(3, 4), &mut rng);
        match g.infer(rand_frame(1, 20, 16)) {
            Err(Error::Shape(msg)) => assert!(msg.contains("divisible by 8"), "{}", msg),
            other => panic!("expected shape error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn zeroed_final_layer_outputs_zeros() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = Generator::new("G", &tiny_cfg(2, 4), &mut rng);
        for p in g.output_layer_params() {
            let shape = p.shape();
            p.set_value(Tensor::zeros(&shape));
        }
        let out = g.infer(rand_frame(3, 8, 8)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn residual_bypass_with_zero_core_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = ModelConfig {
            residual_bypass: true,
            ..tiny_cfg(2, 4)
        };
        let g = Generator::new("G", &cfg, &mut rng);
        for p in g.output_layer_params() {
            let shape = p.shape();
            p.set_value(Tensor::zeros(&shape));
        }
        let x = rand_frame(4, 8, 8);
        let out = g.infer(x.clone()).unwrap();
        assert_eq!(out.data(), x.data());
    }

    #[test]
    fn same_seed_same_params_and_outputs() {
        let g1 = Generator::new("G", &tiny_cfg(3, 4), &mut ChaCha8Rng::seed_from_u64(9));
        let g2 = Generator::new("G", &tiny_cfg(3, 4), &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(hash_params(&g1.params()), hash_params(&g2.params()));
        let x = rand_frame(5, 16, 16);
        let (a, b) = (g1.infer(x.clone()).unwrap(), g1.infer(x.clone()).unwrap());
        assert_eq!(a.data(), b.data());
        let c = g2.infer(x).unwrap();
        assert_eq!(a.data(), c.data());
    }

    #[test]
    fn clone_shares_storage() {
        let g = Generator::new("G", &tiny_cfg(2, 4), &mut ChaCha8Rng::seed_from_u64(1));
        let h = g.clone();
        for (a, b) in g.params().iter().zip(h.params().iter()) {
            assert!(Param::ptr_eq(a, b));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn shape_and_range_hold_for_divisible_dims(
            hm in 1usize..4,
            wm in 1usize..4,
            seed in 0u64..100,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = Generator::new("G", &tiny_cfg(2, 4), &mut rng);
            let (h, w) = (4 * hm, 4 * wm);
            let out = g.infer(rand_frame(seed, h, w)).unwrap();
            prop_assert_eq!(out.shape(), &[1, 3, h, w]);
            prop_assert!(out.data().iter().all(|&v| (-1.0..=1.0).contains(&v)));
        }
    }
}
