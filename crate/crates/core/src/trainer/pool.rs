//! History pool for discriminator inputs.
//!
//! Optionally feeds discriminators from a buffer of previously generated
//! fakes instead of only the freshest batch, which damps oscillation. Each
//! incoming image either joins the pool (while filling), swaps with a random
//! resident (half the time once full), or passes straight through. Capacity
//! zero disables the pool entirely — it then consumes no randomness.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

pub struct ImagePool {
    capacity: usize,
    items: Vec<Vec<f64>>,
}

impl ImagePool {
    pub fn new(capacity: usize) -> ImagePool {
        ImagePool {
            capacity,
            items: Vec::new(),
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.capacity > 0
    }

    /// Exchange a batch of fresh fakes `[n, c, h, w]` for a batch to show
    /// the discriminator.
    pub fn query(&mut self, batch: &Tensor, rng: &mut ChaCha8Rng) -> Tensor {
        if self.capacity == 0 {
            return batch.clone();
        }
        let n = batch.shape()[0];
        let stride = batch.len() / n;
        let mut out = batch.clone();
        for s in 0..n {
            let range = s * stride..(s + 1) * stride;
            if self.items.len() < self.capacity {
                self.items.push(batch.data()[range].to_vec());
            } else if rng.gen_bool(0.5) {
                let pick = rng.gen_range(0..self.items.len());
                debug_assert_eq!(self.items[pick].len(), stride, "pool image size changed");
                out.data_mut()[range.clone()].copy_from_slice(&self.items[pick]);
                self.items[pick].copy_from_slice(&batch.data()[range]);
            }
        }
        out
    }
}
