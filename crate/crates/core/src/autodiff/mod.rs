//! Reverse-mode automatic differentiation on a per-step tape.
//!
//! Each optimization step builds a fresh [`Tape`]: ops execute eagerly,
//! recording a backward closure per node. [`Tape::backward`] walks the
//! closures in reverse creation order (a valid topological order, since ops
//! only consume earlier nodes) and accumulates gradients into node slots and
//! into [`Param`] storage.
//!
//! Parameters are not tape nodes. Ops that use weights capture the [`Param`]
//! handle directly and write weight gradients straight into its shared
//! storage. Sharing a `Param` between two networks therefore shares both the
//! value and the gradient accumulator — cloning a handle aliases storage, it
//! never copies it.

mod ops;

use std::cell::{Ref, RefCell, RefMut};
use std::rc::Rc;

use crate::tensor::Tensor;

/// Shared, named parameter storage. Cloning aliases the same storage.
#[derive(Clone)]
pub struct Param {
    inner: Rc<RefCell<ParamInner>>,
}

pub struct ParamInner {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor, trainable: bool) -> Self {
        let grad = Tensor::zeros(value.shape());
        Param {
            inner: Rc::new(RefCell::new(ParamInner {
                name: name.into(),
                value,
                grad,
                trainable,
            })),
        }
    }

    pub fn borrow(&self) -> Ref<'_, ParamInner> {
        self.inner.borrow()
    }

    pub fn borrow_mut(&self) -> RefMut<'_, ParamInner> {
        self.inner.borrow_mut()
    }

    pub fn name(&self) -> String {
        self.inner.borrow().name.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().value.shape().to_vec()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn trainable(&self) -> bool {
        self.inner.borrow().trainable
    }

    pub fn value_clone(&self) -> Tensor {
        self.inner.borrow().value.clone()
    }

    pub fn grad_clone(&self) -> Tensor {
        self.inner.borrow().grad.clone()
    }

    pub fn set_value(&self, value: Tensor) {
        let mut inner = self.inner.borrow_mut();
        assert_eq!(
            inner.value.shape(),
            value.shape(),
            "set_value shape mismatch for {}",
            inner.name
        );
        inner.value = value;
    }

    pub fn zero_grad(&self) {
        self.inner.borrow_mut().grad.fill(0.0);
    }

    /// Add `delta` to one element of the value (finite-difference probes).
    pub fn nudge(&self, index: usize, delta: f64) {
        self.inner.borrow_mut().value.data_mut()[index] += delta;
    }

    /// True when both handles alias the same storage.
    pub fn ptr_eq(a: &Param, b: &Param) -> bool {
        Rc::ptr_eq(&a.inner, &b.inner)
    }
}

impl std::fmt::Debug for Param {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let inner = self.inner.borrow();
        write!(
            f,
            "Param({}, shape {:?}, trainable={})",
            inner.name,
            inner.value.shape(),
            inner.trainable
        )
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug)]
pub struct Value(pub(crate) usize);

type BackFn = Box<dyn FnOnce(&Tensor, &mut Grads)>;

/// Gradient slots for tape nodes during a backward pass.
pub struct Grads {
    slots: Vec<Option<Tensor>>,
}

impl Grads {
    pub(crate) fn accum(&mut self, id: usize, delta: Tensor) {
        match &mut self.slots[id] {
            Some(t) => t.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }
}

/// One forward pass worth of computation, with enough saved state to run
/// reverse-mode differentiation once.
#[derive(Default)]
pub struct Tape {
    vals: Vec<Rc<Tensor>>,
    backs: Vec<Option<BackFn>>,
    guard_hits: u64,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Number of elements clamped by numeric guards (log arguments).
    pub fn guard_hits(&self) -> u64 {
        self.guard_hits
    }

    pub(crate) fn note_guard_hits(&mut self, n: u64) {
        self.guard_hits += n;
    }

    pub(crate) fn push(&mut self, value: Rc<Tensor>, back: Option<BackFn>) -> Value {
        self.vals.push(value);
        self.backs.push(back);
        Value(self.vals.len() - 1)
    }

    /// Insert a tensor with no backward edge (inputs, detached values).
    pub fn leaf(&mut self, t: Tensor) -> Value {
        self.push(Rc::new(t), None)
    }

    pub fn value(&self, v: Value) -> &Tensor {
        &self.vals[v.0]
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Value) -> f64 {
        self.vals[v.0].item()
    }

    /// Reverse pass from a scalar loss. Accumulates into `Param` gradients.
    /// Consumes the recorded closures; a tape can be walked backward once.
    pub fn backward(&mut self, loss: Value) {
        assert_eq!(
            self.vals[loss.0].len(),
            1,
            "backward requires a scalar loss node"
        );
        let mut grads = Grads {
            slots: vec![None; self.vals.len()],
        };
        grads.slots[loss.0] = Some(Tensor::full(self.vals[loss.0].shape(), 1.0));
        for id in (0..=loss.0).rev() {
            if let Some(g) = grads.slots[id].take() {
                if let Some(f) = self.backs[id].take() {
                    f(&g, &mut grads);
                }
            }
        }
    }
}
