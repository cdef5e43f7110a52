//! Recording tape and reverse sweep.
//!
//! Every primitive appends one node. A node whose inputs are all constants is
//! stored as a constant and never visited by [`Tape::backward`].

use std::cell::RefCell;
use std::sync::Arc;

use crate::autodiff::conv::{self, Conv1dSpec, Conv2dSpec};
use crate::autodiff::elementwise::{self, BinaryKind, UnaryKind};
use crate::autodiff::param::ParamStore;
use crate::autodiff::shape_ops;
use crate::autodiff::spectral;
use crate::autodiff::tensor::Tensor;
use crate::dsp::StftPlan;
use crate::error::{Error, Result};
use crate::float::Float;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) enum Op<T: Float> {
    Constant,
    Leaf,
    Param { store: u64, index: usize },
    Unary { kind: UnaryKind<T>, x: Var },
    Binary { kind: BinaryKind, a: Var, b: Var },
    SumAll(Var),
    SumAxis { x: Var, axis: usize },
    Reshape(Var),
    Permute { x: Var, perm: Vec<usize> },
    Slice { x: Var, axis: usize, start: usize },
    Pad { x: Var, axis: usize, before: usize },
    Concat { xs: Vec<Var>, axis: usize },
    Matmul { a: Var, b: Var },
    Conv1d { x: Var, w: Var, b: Option<Var>, spec: Conv1dSpec },
    Conv2d { x: Var, w: Var, b: Option<Var>, spec: Conv2dSpec },
    Stft { x: Var, plan: Arc<StftPlan<T>> },
    Istft { re: Var, im: Var, plan: Arc<StftPlan<T>> },
    Phi { r: Var, i: Var },
    ComplexAbs { r: Var, i: Var },
}

pub(crate) struct Node<T: Float> {
    pub value: Tensor<T>,
    pub op: Op<T>,
    pub requires_grad: bool,
}

/// Single-owner record of one forward computation.
pub struct Tape<T: Float> {
    nodes: RefCell<Vec<Node<T>>>,
    grad_enabled: bool,
}

impl<T: Float> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Float> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            grad_enabled: true,
        }
    }

    /// A tape on which nothing requires gradients (inference).
    pub fn no_grad() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            grad_enabled: false,
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, v: Var) -> Tensor<T> {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    pub(crate) fn with_value<R>(&self, v: Var, f: impl FnOnce(&Tensor<T>) -> R) -> R {
        f(&self.nodes.borrow()[v.0].value)
    }

    pub(crate) fn push(&self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = requires_grad && self.grad_enabled;
        let op = if requires_grad { op } else { Op::Constant };
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    pub(crate) fn any_grad(&self, vars: &[Var]) -> bool {
        let nodes = self.nodes.borrow();
        vars.iter().any(|v| nodes[v.0].requires_grad)
    }

    pub fn constant(&self, value: Tensor<T>) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn scalar(&self, value: T) -> Var {
        self.constant(Tensor::scalar(value))
    }

    /// An input that gradients flow back to (not a stored parameter).
    pub fn leaf(&self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Bind a stored parameter. Frozen stores and no-grad tapes bind it as a constant.
    pub fn param(&self, store: &ParamStore<T>, id: crate::autodiff::ParamId) -> Var {
        let p = store.get(id);
        self.push(
            p.value().clone(),
            Op::Param {
                store: store.id(),
                index: id.0,
            },
            !store.is_frozen(),
        )
    }

    /// Cut the graph: the value is kept, gradients stop here.
    pub fn detach(&self, v: Var) -> Var {
        self.constant(self.value(v))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.0];
        if root.value.numel() != 1 {
            return Err(Error::NonScalarLoss(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        let mut params = Vec::new();
        if root.requires_grad {
            grads[loss.0] = Some(Tensor::full(root.value.shape(), T::one()));
        }
        for id in (0..=loss.0).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            match &node.op {
                Op::Constant => {}
                Op::Leaf => {
                    grads[id] = Some(g);
                }
                Op::Param { store, index } => {
                    params.push((*store, *index, id));
                    grads[id] = Some(g);
                }
                op => {
                    let mut sink = GradSink {
                        nodes: &nodes,
                        grads: &mut grads,
                    };
                    propagate(op, &node.value, &g, &mut sink)?;
                }
            }
        }
        Ok(Gradients { grads, params })
    }
}

/// Accumulates input gradients during the reverse sweep.
pub(crate) struct GradSink<'a, T: Float> {
    nodes: &'a [Node<T>],
    grads: &'a mut [Option<Tensor<T>>],
}

impl<T: Float> GradSink<'_, T> {
    pub fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn add(&mut self, v: Var, g: Tensor<T>) {
        if !self.wants(v) {
            return;
        }
        debug_assert_eq!(g.shape(), self.nodes[v.0].value.shape(), "gradient shape");
        match &mut self.grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }
}

fn propagate<T: Float>(op: &Op<T>, out: &Tensor<T>, g: &Tensor<T>, sink: &mut GradSink<'_, T>) -> Result<()> {
    match op {
        Op::Constant | Op::Leaf | Op::Param { .. } => {}
        Op::Unary { kind, x } => elementwise::unary_backward(*kind, *x, out, g, sink),
        Op::Binary { kind, a, b } => elementwise::binary_backward(*kind, *a, *b, g, sink),
        Op::SumAll(x) => {
            let shape = sink.value(*x).shape().to_vec();
            sink.add(*x, Tensor::full(&shape, g.item()));
        }
        Op::SumAxis { x, axis } => shape_ops::sum_axis_backward(*x, *axis, g, sink),
        Op::Reshape(x) => {
            let shape = sink.value(*x).shape().to_vec();
            sink.add(*x, g.reshape(&shape)?);
        }
        Op::Permute { x, perm } => shape_ops::permute_backward(*x, perm, g, sink),
        Op::Slice { x, axis, start } => shape_ops::slice_backward(*x, *axis, *start, g, sink),
        Op::Pad { x, axis, before } => shape_ops::pad_backward(*x, *axis, *before, g, sink),
        Op::Concat { xs, axis } => shape_ops::concat_backward(xs, *axis, g, sink),
        Op::Matmul { a, b } => conv::matmul_backward(*a, *b, g, sink),
        Op::Conv1d { x, w, b, spec } => conv::conv1d_backward(*x, *w, *b, spec, g, sink),
        Op::Conv2d { x, w, b, spec } => conv::conv2d_backward(*x, *w, *b, spec, g, sink),
        Op::Stft { x, plan } => spectral::stft_backward(*x, plan, g, sink),
        Op::Istft { re, im, plan } => spectral::istft_backward(*re, *im, plan, g, sink),
        Op::Phi { r, i } => spectral::phi_backward(*r, *i, g, sink),
        Op::ComplexAbs { r, i } => spectral::complex_abs_backward(*r, *i, out, g, sink),
    }
    Ok(())
}

/// Result of [`Tape::backward`]: one optional gradient per recorded node.
pub struct Gradients<T: Float> {
    grads: Vec<Option<Tensor<T>>>,
    params: Vec<(u64, usize, usize)>,
}

impl<T: Float> Gradients<T> {
    /// Gradient reaching `v`, if `v` is a leaf or parameter that the loss depends on.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// `(store id, parameter index, gradient)` for each bound parameter reached.
    pub(crate) fn param_grads(&self) -> impl Iterator<Item = (u64, usize, &Tensor<T>)> + '_ {
        self.params
            .iter()
            .filter_map(|&(s, i, node)| self.grads[node].as_ref().map(|g| (s, i, g)))
    }
}
