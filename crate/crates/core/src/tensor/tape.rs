//! Reverse-mode differentiation over a linear record of primitive ops.
//!
//! A [`Var`] pairs a value with an optional node on a [`Tape`]. Ops on
//! untracked vars compute values only, so the same layer code serves both
//! training (tracked) and inference (untracked, intermediates dropped as
//! soon as they go out of scope).

use std::cell::RefCell;
use std::rc::Rc;
use std::sync::Arc;

use crate::error::{Error, Result};

use super::{Scalar, Tensor};

/// Maps the upstream gradient to one optional gradient per input. The
/// flags say which inputs actually need one.
pub(crate) type BackwardFn<S> = Box<dyn Fn(&Tensor<S>, &[bool]) -> Vec<Option<Tensor<S>>>>;

struct Node<S: Scalar> {
    inputs: Vec<Option<usize>>,
    backward: Option<BackwardFn<S>>,
}

/// Single-threaded operation record. Node ids are assigned in creation
/// order, so every op's inputs precede it.
pub struct Tape<S: Scalar> {
    nodes: Rc<RefCell<Vec<Node<S>>>>,
}

impl<S: Scalar> Clone for Tape<S> {
    fn clone(&self) -> Self {
        Self {
            nodes: Rc::clone(&self.nodes),
        }
    }
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self {
            nodes: Rc::new(RefCell::new(Vec::new())),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn same(&self, other: &Tape<S>) -> bool {
        Rc::ptr_eq(&self.nodes, &other.nodes)
    }

    /// Registers a leaf. Leaves that do not require a gradient stay off the
    /// tape entirely.
    pub fn leaf(&self, value: impl Into<Arc<Tensor<S>>>, requires_grad: bool) -> Var<S> {
        let value = value.into();
        if !requires_grad {
            return Var { value, node: None };
        }
        let id = self.push(Node {
            inputs: Vec::new(),
            backward: None,
        });
        Var {
            value,
            node: Some(NodeRef { tape: self.clone(), id }),
        }
    }

    fn push(&self, node: Node<S>) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(node);
        nodes.len() - 1
    }
}

struct NodeRef<S: Scalar> {
    tape: Tape<S>,
    id: usize,
}

impl<S: Scalar> Clone for NodeRef<S> {
    fn clone(&self) -> Self {
        Self {
            tape: self.tape.clone(),
            id: self.id,
        }
    }
}

/// A tensor value, possibly tracked on a tape.
pub struct Var<S: Scalar = f64> {
    value: Arc<Tensor<S>>,
    node: Option<NodeRef<S>>,
}

impl<S: Scalar> Clone for Var<S> {
    fn clone(&self) -> Self {
        Self {
            value: Arc::clone(&self.value),
            node: self.node.clone(),
        }
    }
}

impl<S: Scalar> std::fmt::Debug for Var<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("shape", &self.value.shape())
            .field("node", &self.node.as_ref().map(|n| n.id))
            .finish()
    }
}

impl<S: Scalar> Var<S> {
    /// Untracked value.
    pub fn constant(value: impl Into<Arc<Tensor<S>>>) -> Self {
        Self {
            value: value.into(),
            node: None,
        }
    }

    pub fn value(&self) -> &Tensor<S> {
        &self.value
    }

    pub fn shared_value(&self) -> Arc<Tensor<S>> {
        Arc::clone(&self.value)
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.is_some()
    }

    /// The value, without copying when this is the only reference.
    pub fn into_tensor(self) -> Tensor<S> {
        Arc::try_unwrap(self.value).unwrap_or_else(|shared| (*shared).clone())
    }

    /// Same value, cut off from the tape.
    pub fn detach(&self) -> Self {
        Self::constant(Arc::clone(&self.value))
    }

    /// Records the result of an op. If no input is tracked the result is an
    /// untracked constant and `backward` is dropped unused.
    pub(crate) fn record(
        inputs: &[&Var<S>],
        value: Tensor<S>,
        backward: impl Fn(&Tensor<S>, &[bool]) -> Vec<Option<Tensor<S>>> + 'static,
    ) -> Result<Var<S>> {
        let mut tape: Option<&Tape<S>> = None;
        for v in inputs {
            if let Some(n) = &v.node {
                match tape {
                    None => tape = Some(&n.tape),
                    Some(t) if !t.same(&n.tape) => return Err(Error::TapeMismatch),
                    _ => {}
                }
            }
        }
        let Some(tape) = tape else {
            return Ok(Var::constant(value));
        };
        let tape = tape.clone();
        let id = tape.push(Node {
            inputs: inputs.iter().map(|v| v.node.as_ref().map(|n| n.id)).collect(),
            backward: Some(Box::new(backward)),
        });
        Ok(Var {
            value: Arc::new(value),
            node: Some(NodeRef { tape, id }),
        })
    }

    /// Reverse sweep from a single-element loss. Visits each recorded op
    /// once, newest first, and returns the gradients of every tracked leaf.
    pub fn backward(&self) -> Result<Gradients<S>> {
        if self.value.numel() != 1 {
            return Err(Error::NonScalarLoss(self.value.shape().to_vec()));
        }
        let Some(node) = &self.node else {
            return Ok(Gradients { tape: None, grads: Vec::new() });
        };
        let nodes = node.tape.nodes.borrow();
        let mut grads: Vec<Option<Tensor<S>>> = (0..nodes.len()).map(|_| None).collect();
        grads[node.id] = Some(Tensor::full(self.value.shape(), S::one()));
        for id in (0..=node.id).rev() {
            let n = &nodes[id];
            let Some(bw) = &n.backward else { continue };
            let Some(g) = grads[id].take() else { continue };
            let needs: Vec<bool> = n.inputs.iter().map(Option::is_some).collect();
            let input_grads = bw(&g, &needs);
            for (slot, ig) in n.inputs.iter().zip(input_grads) {
                if let (Some(src), Some(ig)) = (slot, ig) {
                    match &mut grads[*src] {
                        Some(acc) => acc.add_assign(&ig),
                        empty => *empty = Some(ig),
                    }
                }
            }
        }
        Ok(Gradients {
            tape: Some(node.tape.clone()),
            grads,
        })
    }
}

/// Gradients of the tracked leaves reachable from a loss.
pub struct Gradients<S: Scalar> {
    tape: Option<Tape<S>>,
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, var: &Var<S>) -> Option<&Tensor<S>> {
        let node = var.node.as_ref()?;
        match &self.tape {
            Some(t) if t.same(&node.tape) => self.grads.get(node.id)?.as_ref(),
            _ => None,
        }
    }

    /// Gradient of `var`, or zeros when it did not influence the loss.
    pub fn get_or_zeros(&self, var: &Var<S>) -> Tensor<S> {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(var.shape()))
    }
}
