//! The differentiable tensor type and the reverse-mode graph walker.
//!
//! A [`Tensor`] is a reference-counted node holding a dense row-major `f64`
//! buffer. Every op that touches a tensor requiring gradients records a
//! backward closure together with links to its inputs; [`Tensor::backward`]
//! walks those links in reverse topological order and accumulates gradients
//! into the leaves.

use std::cell::{Cell, Ref, RefCell, RefMut};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

use crate::error::{Result, TensorError};

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Whether ops currently record backward closures on this thread.
pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|c| c.get())
}

/// Disables graph recording until the guard is dropped.
pub struct NoGradGuard {
    prev: bool,
}

pub fn no_grad() -> NoGradGuard {
    let prev = GRAD_ENABLED.with(|c| c.replace(false));
    NoGradGuard { prev }
}

impl Drop for NoGradGuard {
    fn drop(&mut self) {
        GRAD_ENABLED.with(|c| c.set(self.prev));
    }
}

/// Backward rule: receives the output gradient and the output values and
/// returns one optional gradient per recorded input.
pub(crate) type BackwardFn = Box<dyn Fn(&[f64], &[f64]) -> Vec<Option<Vec<f64>>>>;

struct GradFn {
    op: &'static str,
    inputs: Vec<Tensor>,
    backward: BackwardFn,
}

struct Node {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    requires_grad: bool,
    grad_fn: Option<GradFn>,
}

#[derive(Clone)]
pub struct Tensor(Rc<Node>);

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn leaf(data: Vec<f64>, shape: Vec<usize>, requires_grad: bool) -> Result<Tensor> {
        if numel(&shape) != data.len() {
            return Err(TensorError::invalid(
                "tensor",
                format!("shape {:?} needs {} values, got {}", shape, numel(&shape), data.len()),
            ));
        }
        Ok(Tensor(Rc::new(Node {
            id: next_id(),
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad,
            grad_fn: None,
        })))
    }

    /// A constant (non-differentiable) tensor.
    pub fn new(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        Self::leaf(data, shape.to_vec(), false)
    }

    /// A leaf tensor that accumulates gradients.
    pub fn param(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        Self::leaf(data, shape.to_vec(), true)
    }

    pub fn scalar(v: f64) -> Tensor {
        Self::leaf(vec![v], vec![], false).expect("scalar shape")
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        Self::leaf(vec![0.0; numel(shape)], shape.to_vec(), false).expect("zeros shape")
    }

    pub fn ones(shape: &[usize]) -> Tensor {
        Self::leaf(vec![1.0; numel(shape)], shape.to_vec(), false).expect("ones shape")
    }

    pub fn full(shape: &[usize], v: f64) -> Tensor {
        Self::leaf(vec![v; numel(shape)], shape.to_vec(), false).expect("full shape")
    }

    /// Builds the output of an op. Records `backward` only when graph mode is
    /// on and at least one input requires gradients.
    pub(crate) fn from_op<F>(
        op: &'static str,
        data: Vec<f64>,
        shape: Vec<usize>,
        inputs: &[&Tensor],
        backward: F,
    ) -> Result<Tensor>
    where
        F: Fn(&[f64], &[f64]) -> Vec<Option<Vec<f64>>> + 'static,
    {
        debug_assert_eq!(numel(&shape), data.len(), "{op}: shape/data mismatch");
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { op });
        }
        let requires_grad = grad_enabled() && inputs.iter().any(|t| t.requires_grad());
        let grad_fn = requires_grad.then(|| GradFn {
            op,
            inputs: inputs.iter().map(|t| (*t).clone()).collect(),
            backward: Box::new(backward),
        });
        Ok(Tensor(Rc::new(Node {
            id: next_id(),
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad,
            grad_fn,
        })))
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn ndim(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        numel(&self.0.shape)
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.grad_fn.is_none()
    }

    /// Name of the op that produced this tensor, if it was recorded.
    pub fn op_name(&self) -> Option<&'static str> {
        self.0.grad_fn.as_ref().map(|g| g.op)
    }

    pub fn data(&self) -> Ref<'_, Vec<f64>> {
        self.0.data.borrow()
    }

    /// Mutable access to the values. Only meaningful for leaves; mutating
    /// a tensor that participates in a live graph invalidates its backward.
    pub fn data_mut(&self) -> RefMut<'_, Vec<f64>> {
        self.0.data.borrow_mut()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.borrow().clone()
    }

    pub fn item(&self) -> f64 {
        self.0.data.borrow()[0]
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Detached copy of the values (no graph link, no grad).
    pub fn detach(&self) -> Tensor {
        Tensor::new(self.to_vec(), self.shape()).expect("same shape")
    }

    fn accumulate_grad(&self, g: &[f64]) {
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Reverse-mode sweep from a scalar. Gradients accumulate into the
    /// `grad` slot of every reachable leaf that requires them; repeated
    /// calls add up until [`Tensor::zero_grad`] is called.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::NonScalarLoss(self.shape().to_vec()));
        }
        if !self.requires_grad() {
            return Ok(());
        }

        // Iterative post-order DFS; inputs land before their consumers.
        let mut order: Vec<Tensor> = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        let mut stack: Vec<(Tensor, usize)> = vec![(self.clone(), 0)];
        visited.insert(self.id());
        while let Some((t, child)) = stack.pop() {
            let inputs = t.0.grad_fn.as_ref().map(|g| g.inputs.as_slice()).unwrap_or(&[]);
            if child < inputs.len() {
                let next = inputs[child].clone();
                stack.push((t, child + 1));
                if next.requires_grad() && visited.insert(next.id()) {
                    stack.push((next, 0));
                }
            } else {
                order.push(t);
            }
        }

        let mut grads: HashMap<u64, Vec<f64>> = HashMap::new();
        grads.insert(self.id(), vec![1.0]);
        for t in order.iter().rev() {
            let Some(g) = grads.remove(&t.id()) else {
                continue;
            };
            match &t.0.grad_fn {
                Some(gf) => {
                    let out = t.0.data.borrow();
                    let input_grads = (gf.backward)(&g, &out);
                    debug_assert_eq!(input_grads.len(), gf.inputs.len(), "{}", gf.op);
                    for (inp, ig) in gf.inputs.iter().zip(input_grads) {
                        let Some(ig) = ig else { continue };
                        if !inp.requires_grad() {
                            continue;
                        }
                        match grads.get_mut(&inp.id()) {
                            Some(acc) => acc.iter_mut().zip(&ig).for_each(|(a, b)| *a += b),
                            None => {
                                grads.insert(inp.id(), ig);
                            }
                        }
                    }
                }
                None => t.accumulate_grad(&g),
            }
        }
        Ok(())
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let data = self.data();
        let preview: Vec<f64> = data.iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("requires_grad", &self.requires_grad())
            .field("data", &preview)
            .finish()
    }
}
