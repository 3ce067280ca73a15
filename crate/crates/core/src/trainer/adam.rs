//! Adam with decoupled parameter groups and transactional updates.
//!
//! Each group (one per network) owns its own moment buffers and step count.
//! An update is computed in full, checked for finiteness, and only then
//! committed — a non-finite gradient can never scribble on live weights or
//! moments. Snapshots capture values, moments, and the step count so a
//! caller can roll a whole training step back.

use crate::autodiff::Param;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const ADAM_EPS: f64 = 1e-8;

pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    params: Vec<Param>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

/// Copy of one group's full optimizer state (values included).
pub struct AdamSnapshot {
    values: Vec<Tensor>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(params: Vec<Param>, lr: f64, beta1: f64, beta2: f64) -> Adam {
        let m = params.iter().map(|p| vec![0.0; p.len()]).collect();
        let v = params.iter().map(|p| vec![0.0; p.len()]).collect();
        Adam {
            lr,
            beta1,
            beta2,
            params,
            m,
            v,
            t: 0,
        }
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn zero_grads(&self) {
        for p in &self.params {
            p.zero_grad();
        }
    }

    /// Apply one update from the gradients currently in the params.
    ///
    /// All new values and moments are computed and verified finite before
    /// anything is written; on a non-finite result the group is untouched
    /// and the error names the offending parameter.
    pub fn step(&mut self) -> Result<()> {
        let t = self.t + 1;
        let bc1 = 1.0 - self.beta1.powi(t as i32);
        let bc2 = 1.0 - self.beta2.powi(t as i32);

        let mut staged: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> =
            Vec::with_capacity(self.params.len());
        for (i, p) in self.params.iter().enumerate() {
            let inner = p.borrow();
            let g = inner.grad.data();
            let val = inner.value.data();
            let mut nm = self.m[i].clone();
            let mut nv = self.v[i].clone();
            let mut nval = val.to_vec();
            for j in 0..g.len() {
                nm[j] = self.beta1 * nm[j] + (1.0 - self.beta1) * g[j];
                nv[j] = self.beta2 * nv[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mhat = nm[j] / bc1;
                let vhat = nv[j] / bc2;
                nval[j] = val[j] - self.lr * mhat / (vhat.sqrt() + ADAM_EPS);
            }
            let finite = nval.iter().all(|x| x.is_finite())
                && nm.iter().all(|x| x.is_finite())
                && nv.iter().all(|x| x.is_finite());
            if !finite {
                return Err(Error::NonFinite(format!(
                    "update for parameter `{}`",
                    inner.name
                )));
            }
            staged.push((nval, nm, nv));
        }

        for (i, (nval, nm, nv)) in staged.into_iter().enumerate() {
            let shape = self.params[i].shape();
            self.params[i].set_value(Tensor::new(&shape, nval));
            self.m[i] = nm;
            self.v[i] = nv;
        }
        self.t = t;
        Ok(())
    }

    pub fn snapshot(&self) -> AdamSnapshot {
        AdamSnapshot {
            values: self.params.iter().map(|p| p.value_clone()).collect(),
            m: self.m.clone(),
            v: self.v.clone(),
            t: self.t,
        }
    }

    pub fn restore(&mut self, snap: &AdamSnapshot) {
        for (p, val) in self.params.iter().zip(&snap.values) {
            p.set_value(val.clone());
        }
        self.m = snap.m.clone();
        self.v = snap.v.clone();
        self.t = snap.t;
    }

    /// Raw moment access for checkpointing, parallel to `params()`.
    pub(crate) fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.m, &self.v)
    }

    pub(crate) fn restore_state(&mut self, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>, t: u64) {
        assert_eq!(m.len(), self.params.len());
        assert_eq!(v.len(), self.params.len());
        self.m = m;
        self.v = v;
        self.t = t;
    }
}
