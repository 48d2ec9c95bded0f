//! Dense row-major `f64` tensors with a dynamically recorded backward graph.
//!
//! Every operation that has at least one input requiring a gradient records a
//! node holding its parents and a backward closure. Node ids are allocated
//! from a monotonically increasing per-thread counter, so children always
//! carry larger ids than their parents and a descending-id sweep is a valid
//! reverse topological order.

use std::cell::{Cell, RefCell};
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;

/// Backward closure: receives the gradient of the node output and a flag per
/// parent telling whether that parent needs a gradient. Returns one optional
/// gradient buffer per parent, each with the parent's element count.
pub type BackwardFn = Box<dyn Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>>>;

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Returns whether graph recording is currently enabled on this thread.
pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|c| c.get())
}

/// Guard that disables graph recording until dropped.
pub struct NoGradGuard {
    prev: bool,
}

impl NoGradGuard {
    pub fn new() -> Self {
        let prev = GRAD_ENABLED.with(|c| c.replace(false));
        Self { prev }
    }
}

impl Default for NoGradGuard {
    fn default() -> Self {
        Self::new()
    }
}

impl Drop for NoGradGuard {
    fn drop(&mut self) {
        GRAD_ENABLED.with(|c| c.set(self.prev));
    }
}

/// Runs `f` with graph recording disabled.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let _guard = NoGradGuard::new();
    f()
}

struct Node {
    parents: Vec<Tensor>,
    backward: BackwardFn,
}

struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: Rc<Vec<f64>>,
    requires_grad: bool,
    node: Option<Node>,
    grad: RefCell<Option<Vec<f64>>>,
    retain: Cell<bool>,
}

/// Reference-counted tensor handle. Cloning is cheap and shares storage.
#[derive(Clone)]
pub struct Tensor(Rc<Inner>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

pub(crate) fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn make(shape: Vec<usize>, data: Rc<Vec<f64>>, requires_grad: bool, node: Option<Node>) -> Self {
        assert_eq!(
            numel_of(&shape),
            data.len(),
            "shape {:?} does not match {} elements",
            shape,
            data.len()
        );
        Tensor(Rc::new(Inner {
            id: next_id(),
            shape,
            data,
            requires_grad,
            node,
            grad: RefCell::new(None),
            retain: Cell::new(false),
        }))
    }

    /// Constant tensor (never requires a gradient).
    pub fn new(data: Vec<f64>, shape: &[usize]) -> Self {
        Self::make(shape.to_vec(), Rc::new(data), false, None)
    }

    pub(crate) fn from_rc(data: Rc<Vec<f64>>, shape: &[usize]) -> Self {
        Self::make(shape.to_vec(), data, false, None)
    }

    /// Leaf tensor that accumulates a gradient when `requires_grad` is set.
    pub fn leaf(data: Vec<f64>, shape: &[usize], requires_grad: bool) -> Self {
        Self::make(shape.to_vec(), Rc::new(data), requires_grad, None)
    }

    pub(crate) fn leaf_rc(data: Rc<Vec<f64>>, shape: &[usize], requires_grad: bool) -> Self {
        Self::make(shape.to_vec(), data, requires_grad, None)
    }

    pub fn scalar(v: f64) -> Self {
        Self::new(vec![v], &[])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(vec![0.0; numel_of(shape)], shape)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::new(vec![1.0; numel_of(shape)], shape)
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        Self::new(vec![v; numel_of(shape)], shape)
    }

    /// Records the result of a custom operation. When no parent requires a
    /// gradient (or recording is disabled) the closure is dropped and the
    /// result is a constant.
    pub fn from_op<F>(data: Vec<f64>, shape: &[usize], parents: &[&Tensor], backward: F) -> Self
    where
        F: Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>> + 'static,
    {
        Self::from_op_rc(Rc::new(data), shape, parents, backward)
    }

    pub(crate) fn from_op_rc<F>(data: Rc<Vec<f64>>, shape: &[usize], parents: &[&Tensor], backward: F) -> Self
    where
        F: Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>> + 'static,
    {
        let needs = grad_enabled() && parents.iter().any(|p| p.requires_grad());
        if !needs {
            return Self::make(shape.to_vec(), data, false, None);
        }
        let node = Node {
            parents: parents.iter().map(|p| (*p).clone()).collect(),
            backward: Box::new(backward),
        };
        Self::make(shape.to_vec(), data, true, Some(node))
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.0.shape[axis]
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub(crate) fn data_rc(&self) -> Rc<Vec<f64>> {
        self.0.data.clone()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.as_ref().clone()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.0.data[0]
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.node.is_none()
    }

    /// Accumulated gradient (leaves, or nodes marked with [`Tensor::retain_grad`]).
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow().clone()
    }

    pub fn grad_tensor(&self) -> Option<Tensor> {
        self.grad().map(|g| Tensor::new(g, self.shape()))
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Keeps this intermediate node's gradient after [`Tensor::backward`].
    pub fn retain_grad(&self) {
        self.0.retain.set(true);
    }

    /// Same storage, cut from the graph.
    pub fn detach(&self) -> Tensor {
        Tensor::from_rc(self.data_rc(), self.shape())
    }

    /// Backpropagates from a single-element tensor.
    pub fn backward(&self) {
        assert_eq!(self.numel(), 1, "backward() needs a scalar, got {:?}", self.shape());
        self.backward_with(vec![1.0]);
    }

    /// Backpropagates an explicit output gradient.
    pub fn backward_with(&self, seed: Vec<f64>) {
        assert_eq!(seed.len(), self.numel());
        if !self.requires_grad() {
            return;
        }
        let mut order: Vec<Tensor> = Vec::new();
        let mut seen: HashSet<u64> = HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if !seen.insert(t.id()) {
                continue;
            }
            if let Some(node) = &t.0.node {
                for p in &node.parents {
                    if p.requires_grad() && !seen.contains(&p.id()) {
                        stack.push(p.clone());
                    }
                }
            }
            order.push(t);
        }
        order.sort_by_key(|t| std::cmp::Reverse(t.id()));

        let mut grads: HashMap<u64, Vec<f64>> = HashMap::new();
        grads.insert(self.id(), seed);
        for t in order {
            let Some(g) = grads.remove(&t.id()) else {
                continue;
            };
            match &t.0.node {
                None => accumulate_into(&t.0.grad, g),
                Some(node) => {
                    if t.0.retain.get() {
                        accumulate_into(&t.0.grad, g.clone());
                    }
                    let needs: Vec<bool> = node.parents.iter().map(|p| p.requires_grad()).collect();
                    let pgrads = (node.backward)(&g, &needs);
                    debug_assert_eq!(pgrads.len(), node.parents.len());
                    for (p, pg) in node.parents.iter().zip(pgrads) {
                        let Some(pg) = pg else { continue };
                        if !p.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(pg.len(), p.numel(), "gradient size mismatch");
                        match grads.get_mut(&p.id()) {
                            Some(acc) => add_assign(acc, &pg),
                            None => {
                                grads.insert(p.id(), pg);
                            }
                        }
                    }
                }
            }
        }
    }
}

fn accumulate_into(cell: &RefCell<Option<Vec<f64>>>, g: Vec<f64>) {
    let mut slot = cell.borrow_mut();
    match slot.as_mut() {
        Some(acc) => add_assign(acc, &g),
        None => *slot = Some(g),
    }
}

pub(crate) fn add_assign(acc: &mut [f64], g: &[f64]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}
