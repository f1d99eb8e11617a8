//! Define-by-run reverse-mode differentiation tape.
//!
//! One tape may be active per thread. While a [`Tape`] guard is alive, ops
//! record themselves; [`Tape::backward`] replays the records in reverse and
//! *accumulates* (`+=`) into every reachable [`Parameter`]'s gradient
//! buffer. Accumulation rather than overwrite is the load-bearing choice:
//! a parameter used in several roles (W and Wᵀ of a tied layer, or one W
//! shared by every block of a stage) receives the sum of all its
//! contributions, which is exactly the tied-weight gradient.

use std::any::Any;
use std::cell::RefCell;
use std::collections::HashMap;
use std::marker::PhantomData;

use crate::error::{Error, Result};
use crate::param::Parameter;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub(crate) type NodeId = usize;

struct Node<T: Scalar> {
    numel: usize,
    grad: Option<Vec<T>>,
}

type BackFn<T> = Box<dyn Fn(&[T]) -> Vec<(NodeId, Vec<T>)>>;

struct Step<T: Scalar> {
    out: NodeId,
    back: BackFn<T>,
}

struct TapeState<T: Scalar> {
    nodes: Vec<Node<T>>,
    steps: Vec<Step<T>>,
    // parameter identity -> leaf node, so every use of a parameter maps to
    // one node no matter how many times it appears in the graph
    leaves: HashMap<usize, NodeId>,
    params: Vec<(NodeId, Parameter<T>)>,
}

impl<T: Scalar> TapeState<T> {
    fn new() -> Self {
        TapeState {
            nodes: Vec::new(),
            steps: Vec::new(),
            leaves: HashMap::new(),
            params: Vec::new(),
        }
    }

    fn new_node(&mut self, numel: usize) -> NodeId {
        self.nodes.push(Node { numel, grad: None });
        self.nodes.len() - 1
    }
}

thread_local! {
    static ACTIVE: RefCell<Option<Box<dyn Any>>> = const { RefCell::new(None) };
}

fn with_state<T: Scalar, R>(f: impl FnOnce(&mut TapeState<T>) -> R) -> Option<R> {
    ACTIVE.with(|cell| {
        let mut slot = cell.borrow_mut();
        slot.as_mut()
            .and_then(|any| any.downcast_mut::<TapeState<T>>())
            .map(f)
    })
}

/// RAII guard activating a fresh tape on the current thread.
///
/// Dropping the guard discards the recording. Panics if a tape is already
/// active on this thread (one tape per thread of control).
pub struct Tape<T: Scalar> {
    // keep the guard on the thread that owns the thread-local state
    _not_send: PhantomData<*const T>,
}

impl<T: Scalar> Tape<T> {
    #[allow(clippy::new_without_default)]
    pub fn new() -> Self {
        ACTIVE.with(|cell| {
            let mut slot = cell.borrow_mut();
            assert!(
                slot.is_none(),
                "a tape is already active on this thread; drop it before starting another"
            );
            *slot = Some(Box::new(TapeState::<T>::new()));
        });
        Tape {
            _not_send: PhantomData,
        }
    }

    /// Registers `t` as a differentiable leaf and returns the tracked handle.
    /// Use for plain inputs; parameters track themselves via
    /// [`Parameter::tracked`].
    pub fn watch(&self, t: &Tensor<T>) -> Tensor<T> {
        let mut out = t.detached();
        let node =
            with_state::<T, _>(|st| st.new_node(t.numel())).expect("tape guard is alive");
        out.set_node(node);
        out
    }

    /// Reverse sweep from a scalar `loss`. Node gradients are rebuilt from
    /// scratch, then every parameter leaf's gradient buffer is accumulated
    /// (`+=`), so two backward calls without `zero_grad` double the grads.
    pub fn backward(&self, loss: &Tensor<T>) -> Result<()> {
        if loss.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got dims {:?}",
                loss.dims()
            )));
        }
        let root = loss.node().ok_or_else(|| {
            Error::Contract("backward: loss was not produced on the active tape".into())
        })?;
        with_state::<T, _>(|st| {
            for node in &mut st.nodes {
                node.grad = None;
            }
            st.nodes[root].grad = Some(vec![T::ONE]);

            let steps = std::mem::take(&mut st.steps);
            for step in steps.iter().rev() {
                let gout = match &st.nodes[step.out].grad {
                    Some(g) => g.clone(),
                    None => continue,
                };
                for (nid, delta) in (step.back)(&gout) {
                    debug_assert_eq!(delta.len(), st.nodes[nid].numel);
                    match &mut st.nodes[nid].grad {
                        Some(acc) => {
                            for (a, d) in acc.iter_mut().zip(delta.iter()) {
                                *a += *d;
                            }
                        }
                        None => st.nodes[nid].grad = Some(delta),
                    }
                }
            }
            st.steps = steps;

            for (nid, param) in &st.params {
                if let Some(g) = &st.nodes[*nid].grad {
                    param.accumulate_grad(g);
                }
            }
        })
        .expect("tape guard is alive");
        Ok(())
    }

    /// Gradient of a tracked tensor after [`Tape::backward`], as a tensor of
    /// the same dims. `None` if `t` is untracked or unreached.
    pub fn grad(&self, t: &Tensor<T>) -> Option<Tensor<T>> {
        let node = t.node()?;
        with_state::<T, _>(|st| {
            st.nodes[node]
                .grad
                .as_ref()
                .map(|g| Tensor::from_vec(t.dims().to_vec(), g.clone()).expect("grad dims match"))
        })
        .flatten()
    }
}

impl<T: Scalar> Drop for Tape<T> {
    fn drop(&mut self) {
        ACTIVE.with(|cell| {
            *cell.borrow_mut() = None;
        });
    }
}

/// Leaf node for a parameter on the active tape, memoized by parameter
/// identity. `None` when no tape (of this dtype) is active.
pub(crate) fn leaf_for_param<T: Scalar>(param: &Parameter<T>) -> Option<NodeId> {
    with_state::<T, _>(|st| {
        let key = param.ptr_id();
        if let Some(&node) = st.leaves.get(&key) {
            return node;
        }
        let node = st.new_node(param.numel());
        st.leaves.insert(key, node);
        st.params.push((node, param.clone()));
        node
    })
}

/// Records one op: `inputs` are the op's operands (tracked or not), `back`
/// maps the output gradient to per-input gradient contributions (dense
/// row-major, entries for untracked inputs are ignored and may be `None`).
///
/// No-op when no tape is active or no input is tracked; otherwise assigns a
/// fresh node to `out`.
pub(crate) fn record_op<T, F>(out: &mut Tensor<T>, inputs: &[&Tensor<T>], back: F)
where
    T: Scalar,
    F: Fn(&[T], &[bool]) -> Vec<Option<Vec<T>>> + 'static,
{
    let input_nodes: Vec<Option<NodeId>> = inputs.iter().map(|t| t.node()).collect();
    if input_nodes.iter().all(|n| n.is_none()) {
        return;
    }
    let numel = out.numel();
    let Some(out_node) = with_state::<T, _>(|st| st.new_node(numel)) else {
        return;
    };
    out.set_node(out_node);
    let needs: Vec<bool> = input_nodes.iter().map(|n| n.is_some()).collect();
    let step_back: BackFn<T> = Box::new(move |gout| {
        let grads = back(gout, &needs);
        debug_assert_eq!(grads.len(), input_nodes.len());
        grads
            .into_iter()
            .zip(input_nodes.iter())
            .filter_map(|(g, node)| match (g, node) {
                (Some(g), Some(node)) => Some((*node, g)),
                _ => None,
            })
            .collect()
    });
    with_state::<T, _>(|st| {
        st.steps.push(Step {
            out: out_node,
            back: step_back,
        })
    });
}
