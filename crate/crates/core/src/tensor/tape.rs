//! Recording tape for reverse-mode differentiation.
//!
//! Every differentiable op pushes one node holding a closure that maps the
//! node's output gradient to gradient contributions on its parents. Nodes
//! are pushed in forward order, so a single reverse sweep over the node list
//! is a valid reverse-topological traversal.

use std::cell::RefCell;
use std::rc::Rc;

use crate::Real;

/// Accumulates `src` into the gradient slot for `id`, allocating zeros on
/// first touch. Slots start empty so unreachable nodes are never visited.
pub(crate) fn accumulate(grads: &mut [Vec<Real>], id: usize, size: usize, src: &[Real]) {
    accumulate_scaled(grads, id, size, src, 1.0);
}

/// `grads[id] += factor * src`, allocating zeros on first touch.
pub(crate) fn accumulate_scaled(
    grads: &mut [Vec<Real>],
    id: usize,
    size: usize,
    src: &[Real],
    factor: Real,
) {
    let slot = &mut grads[id];
    if slot.is_empty() {
        slot.resize(size, 0.0);
    }
    debug_assert_eq!(slot.len(), src.len());
    if factor == 1.0 {
        for (g, s) in slot.iter_mut().zip(src) {
            *g += *s;
        }
    } else {
        for (g, s) in slot.iter_mut().zip(src) {
            *g += factor * *s;
        }
    }
}

pub(crate) type BackwardFn = Box<dyn Fn(&[Real], &mut [Vec<Real>])>;

pub(crate) struct Node {
    /// Number of scalar outputs of this node (rows * cols).
    pub size: usize,
    pub backward: BackwardFn,
}

struct TapeInner {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Shared handle to a recording tape. Cloning the handle shares the tape.
///
/// A tape is single-use: `Tensor::backward` sweeps it and then clears it;
/// recording further ops against a consumed tape panics.
#[derive(Clone)]
pub struct Tape {
    inner: Rc<RefCell<TapeInner>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(RefCell::new(TapeInner {
                nodes: Vec::new(),
                consumed: false,
            })),
        }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn same_tape(a: &Tape, b: &Tape) -> bool {
        Rc::ptr_eq(&a.inner, &b.inner)
    }

    pub(crate) fn push(&self, size: usize, backward: BackwardFn) -> usize {
        let mut inner = self.inner.borrow_mut();
        assert!(
            !inner.consumed,
            "recording on a tape that was already consumed by backward()"
        );
        inner.nodes.push(Node { size, backward });
        inner.nodes.len() - 1
    }

    /// Reverse sweep seeding node `root` with gradient 1. Gradient sinks of
    /// leaf nodes are filled as a side effect; the tape is cleared afterwards.
    pub(crate) fn backward_from(&self, root: usize) {
        {
            let inner = self.inner.borrow();
            let nodes = &inner.nodes;
            debug_assert_eq!(nodes[root].size, 1);
            let mut grads: Vec<Vec<Real>> = vec![Vec::new(); nodes.len()];
            grads[root] = vec![1.0];
            for id in (0..=root).rev() {
                if grads[id].is_empty() {
                    continue;
                }
                let g = std::mem::take(&mut grads[id]);
                (nodes[id].backward)(&g, &mut grads);
            }
        }
        let mut inner = self.inner.borrow_mut();
        inner.nodes.clear();
        inner.consumed = true;
    }
}
