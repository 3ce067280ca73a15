//! Pixel-level discriminator: a stack of 1x1 convolutions.
//!
//! Every layer is pointwise, so the realness score at (i, j) depends on the
//! input at (i, j) alone — the receptive field never grows. There is no
//! normalization anywhere in the stack: normalization would mix statistics
//! across pixels and break that locality.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Param, Tape, Value};
use crate::error::Result;
use crate::losses::GanForm;
use crate::tensor::Tensor;

use super::generator::{gaussian_param, INIT_STD, LEAKY_SLOPE};

/// Head activation; paired with the GAN objective family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalAct {
    /// (0,1) probabilities, for the vanilla log objective.
    Sigmoid,
    /// Unbounded scores, for the least-squares objective.
    Linear,
}

impl From<GanForm> for FinalAct {
    fn from(form: GanForm) -> FinalAct {
        match form {
            GanForm::LeastSquares => FinalAct::Linear,
            GanForm::VanillaLog => FinalAct::Sigmoid,
        }
    }
}

#[derive(Clone)]
pub struct Discriminator {
    layers: Vec<(Param, Param)>,
    final_act: FinalAct,
}

impl Discriminator {
    /// `hidden` lists the interior widths; the full chain is
    /// 3 -> hidden[0] -> ... -> hidden[last] -> 1.
    pub fn new(
        prefix: &str,
        hidden: &[usize],
        final_act: FinalAct,
        rng: &mut ChaCha8Rng,
    ) -> Discriminator {
        let mut widths = vec![3];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, io)| {
                let w = gaussian_param(
                    rng,
                    format!("{prefix}.l{}.w", i + 1),
                    &[io[1], io[0], 1, 1],
                    INIT_STD,
                );
                let b = Param::new(format!("{prefix}.l{}.b", i + 1), Tensor::zeros(&[io[1]]), true);
                (w, b)
            })
            .collect();
        Discriminator { layers, final_act }
    }

    /// H×W×3 -> H×W×1 realness map.
    pub fn forward(&self, tape: &mut Tape, x: Value) -> Result<Value> {
        let mut cur = x;
        let last = self.layers.len() - 1;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            cur = tape.conv2d(cur, w, Some(b), 1, 0)?;
            if i < last {
                cur = tape.leaky_relu(cur, LEAKY_SLOPE);
            }
        }
        Ok(match self.final_act {
            FinalAct::Sigmoid => tape.sigmoid(cur),
            FinalAct::Linear => cur,
        })
    }

    pub fn infer(&self, x: Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let v = tape.leaf(x);
        let y = self.forward(&mut tape, v)?;
        Ok(tape.value(y).clone())
    }

    pub fn params(&self) -> Vec<Param> {
        self.layers
            .iter()
            .flat_map(|(w, b)| [w.clone(), b.clone()])
            .collect()
    }

    pub fn final_layer_params(&self) -> Vec<Param> {
        let (w, b) = self.layers.last().expect("discriminator has layers");
        vec![w.clone(), b.clone()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng as _, SeedableRng as _};

    fn rand_frame(seed: u64, h: usize, w: usize) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(
            &[1, 3, h, w],
            (0..3 * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
    }

    fn new_disc(seed: u64, act: FinalAct) -> Discriminator {
        Discriminator::new("D", &[64, 128], act, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn maps_hxwx3_to_hxwx1() {
        let d = new_disc(0, FinalAct::Sigmoid);
        let out = d.infer(rand_frame(1, 64, 64)).unwrap();
        assert_eq!(out.shape(), &[1, 1, 64, 64]);
        assert!(out.data().iter().all(|&v| (0.0..1.0).contains(&v)));
    }

    #[test]
    fn single_pixel_perturbation_stays_local() {
        let d = new_disc(2, FinalAct::Linear);
        let x = rand_frame(3, 8, 8);
        let base = d.infer(x.clone()).unwrap();
        // Perturb all three channels of pixel (2, 5).
        let mut px = x.clone();
        for c in 0..3 {
            px.data_mut()[c * 64 + 2 * 8 + 5] += 0.37;
        }
        let moved = d.infer(px).unwrap();
        for i in 0..64 {
            if i == 2 * 8 + 5 {
                assert_ne!(base.data()[i], moved.data()[i]);
            } else {
                assert_eq!(base.data()[i], moved.data()[i]);
            }
        }
    }

    #[test]
    fn permuting_pixels_permutes_outputs() {
        let d = new_disc(4, FinalAct::Sigmoid);
        let x = rand_frame(5, 4, 4);
        let base = d.infer(x.clone()).unwrap();
        // Swap pixels (0,0) and (3,3) in every channel.
        let mut sx = x.clone();
        for c in 0..3 {
            let (a, b) = (c * 16, c * 16 + 15);
            sx.data_mut().swap(a, b);
        }
        let swapped = d.infer(sx).unwrap();
        assert_eq!(base.data()[0], swapped.data()[15]);
        assert_eq!(base.data()[15], swapped.data()[0]);
        for i in 1..15 {
            assert_eq!(base.data()[i], swapped.data()[i]);
        }
    }

    #[test]
    fn zeroed_final_layer_sigmoid_gives_half() {
        let d = new_disc(6, FinalAct::Sigmoid);
        for p in d.final_layer_params() {
            let shape = p.shape();
            p.set_value(Tensor::zeros(&shape));
        }
        let out = d.infer(rand_frame(7, 4, 4)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.5));
    }
}
