//! Named trainable tensors with gradient accumulators.
//!
//! `Parameter` is reference-counted: cloning a handle clones the *identity*,
//! not the data. A tied layer therefore holds one parameter reachable through
//! two roles, and a shared stage holds one parameter reachable from every
//! block. Gradients land in a single buffer no matter how many roles exist.

use std::sync::{Arc, RwLock};

use crate::scalar::Scalar;
use crate::tape;
use crate::tensor::Tensor;

/// How `init_params` fills a parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitKind {
    Zeros,
    Ones,
    /// Normal(0, std) resampled until within ±2·std.
    TruncNormal { std: f64 },
    /// Kaiming normal, fan-out mode (for conv kernels).
    KaimingFanOut,
}

struct ParamInner<T: Scalar> {
    name: String,
    value: Tensor<T>,
    grad: RwLock<Vec<T>>,
    trainable: bool,
    init: InitKind,
}

/// Shared handle to a named tensor with a gradient buffer.
pub struct Parameter<T: Scalar>(Arc<ParamInner<T>>);

impl<T: Scalar> Clone for Parameter<T> {
    fn clone(&self) -> Self {
        Parameter(Arc::clone(&self.0))
    }
}

impl<T: Scalar> Parameter<T> {
    /// Zero-filled parameter; values come later from `init_params` or loading.
    pub fn new(name: impl Into<String>, dims: impl Into<Vec<usize>>, init: InitKind) -> Self {
        let value = Tensor::zeros(dims);
        Self::from_tensor(name, value, init)
    }

    pub fn from_tensor(name: impl Into<String>, value: Tensor<T>, init: InitKind) -> Self {
        let numel = value.numel();
        Parameter(Arc::new(ParamInner {
            name: name.into(),
            value: value.detached(),
            grad: RwLock::new(vec![T::ZERO; numel]),
            trainable: true,
            init,
        }))
    }

    /// Non-trainable tensor that still lives in the registry and the
    /// checkpoint (batch-norm running statistics).
    pub fn buffer(name: impl Into<String>, dims: impl Into<Vec<usize>>, init: InitKind) -> Self {
        let value = Tensor::zeros(dims);
        let numel = value.numel();
        Parameter(Arc::new(ParamInner {
            name: name.into(),
            value: value.detached(),
            grad: RwLock::new(vec![T::ZERO; numel]),
            trainable: false,
            init,
        }))
    }

    pub fn name(&self) -> &str {
        &self.0.name
    }

    pub fn dims(&self) -> &[usize] {
        self.0.value.dims()
    }

    pub fn numel(&self) -> usize {
        self.0.value.numel()
    }

    pub fn trainable(&self) -> bool {
        self.0.trainable
    }

    pub fn init_kind(&self) -> InitKind {
        self.0.init
    }

    /// Identity of this parameter (stable while any handle is alive).
    pub fn ptr_id(&self) -> usize {
        Arc::as_ptr(&self.0) as *const () as usize
    }

    /// Untracked handle to the value (shares storage).
    pub fn value(&self) -> Tensor<T> {
        self.0.value.detached()
    }

    /// Handle registered as a leaf on the active tape, or untracked when no
    /// tape is live. Repeated calls while one tape is active yield the same
    /// node, so every use of this parameter accumulates into one gradient.
    pub fn tracked(&self) -> Tensor<T> {
        let mut t = self.0.value.detached();
        if let Some(node) = tape::leaf_for_param(self) {
            t.set_node(node);
        }
        t
    }

    pub fn grad(&self) -> Vec<T> {
        self.0.grad.read().unwrap().clone()
    }

    pub fn grad_tensor(&self) -> Tensor<T> {
        Tensor::from_vec(self.dims().to_vec(), self.grad()).expect("grad dims match value dims")
    }

    pub fn zero_grad(&self) {
        for g in self.0.grad.write().unwrap().iter_mut() {
            *g = T::ZERO;
        }
    }

    pub(crate) fn accumulate_grad(&self, delta: &[T]) {
        let mut grad = self.0.grad.write().unwrap();
        debug_assert_eq!(grad.len(), delta.len());
        for (g, d) in grad.iter_mut().zip(delta.iter()) {
            *g += *d;
        }
    }

    pub fn value_snapshot(&self) -> Vec<T> {
        self.0.value.to_vec()
    }

    pub fn set_value(&self, values: &[T]) -> crate::error::Result<()> {
        self.0.value.copy_from_slice(values)
    }

    /// In-place update of the raw value buffer (optimizer steps, gradient
    /// probes). Writes are visible through every view of this parameter.
    pub fn update_value(&self, f: impl FnOnce(&mut [T])) {
        self.0.value.with_storage_mut(f);
    }
}

impl<T: Scalar> std::fmt::Debug for Parameter<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Parameter<{}> {:?} dims {:?} trainable={}",
            T::DTYPE,
            self.0.name,
            self.dims(),
            self.0.trainable
        )
    }
}

/// Drops duplicate handles, keeping first occurrence order. The result is
/// the set of *distinct* parameters, which is what counting and serialization
/// must operate on.
pub fn dedup_params<T: Scalar>(params: Vec<Parameter<T>>) -> Vec<Parameter<T>> {
    let mut seen = std::collections::HashSet::new();
    params
        .into_iter()
        .filter(|p| seen.insert(p.ptr_id()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_is_exactly_zero() {
        let p = Parameter::<f32>::new("w", vec![2, 2], InitKind::Zeros);
        p.accumulate_grad(&[1.0, 2.0, 3.0, 4.0]);
        p.zero_grad();
        assert!(p.grad().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn clone_preserves_identity() {
        let p = Parameter::<f32>::new("w", vec![2], InitKind::Zeros);
        let q = p.clone();
        assert_eq!(p.ptr_id(), q.ptr_id());
        q.set_value(&[5.0, 6.0]).unwrap();
        assert_eq!(p.value_snapshot(), vec![5.0, 6.0]);
        assert_eq!(dedup_params(vec![p.clone(), q]).len(), 1);
    }
}
