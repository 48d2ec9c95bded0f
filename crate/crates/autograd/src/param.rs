//! Named trainable parameters and a hierarchical builder.

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{numel_of, Tensor};
use crate::{Error, Result};

struct ParamInner {
    name: String,
    shape: Vec<usize>,
    leaf: RefCell<Tensor>,
    trainable: Cell<bool>,
}

/// A parameter owns the current leaf tensor handed out to forward passes.
/// Every forward pass within one step reads the same leaf, so its gradient
/// accumulates across all uses.
#[derive(Clone)]
pub struct Param(Rc<ParamInner>);

impl std::fmt::Debug for Param {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Param({}, {:?})", self.0.name, self.0.shape)
    }
}

impl Param {
    fn new(name: String, data: Vec<f64>, shape: &[usize]) -> Self {
        let leaf = Tensor::leaf(data, shape, true);
        Param(Rc::new(ParamInner {
            name,
            shape: shape.to_vec(),
            leaf: RefCell::new(leaf),
            trainable: Cell::new(true),
        }))
    }

    pub fn name(&self) -> &str {
        &self.0.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn numel(&self) -> usize {
        numel_of(&self.0.shape)
    }

    pub fn tensor(&self) -> Tensor {
        self.0.leaf.borrow().clone()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.leaf.borrow().to_vec()
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.leaf.borrow().grad()
    }

    pub fn zero_grad(&self) {
        self.0.leaf.borrow().zero_grad();
    }

    pub fn trainable(&self) -> bool {
        self.0.trainable.get()
    }

    /// Replaces the values; drops any accumulated gradient.
    pub fn set_data(&self, data: Vec<f64>) {
        assert_eq!(data.len(), self.numel(), "set_data size mismatch for {}", self.0.name);
        *self.0.leaf.borrow_mut() = Tensor::leaf(data, &self.0.shape, self.trainable());
    }

    /// Frozen parameters hand out constant leaves, so gradients still flow
    /// through them to other inputs but are not accumulated for them.
    pub fn set_trainable(&self, on: bool) {
        if self.trainable() == on {
            return;
        }
        self.0.trainable.set(on);
        let data = self.0.leaf.borrow().data_rc();
        *self.0.leaf.borrow_mut() = Tensor::leaf_rc(data, &self.0.shape, on);
    }
}

/// Ordered collection of parameters.
#[derive(Clone, Default)]
pub struct ParamStore {
    params: Rc<RefCell<Vec<Param>>>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn params(&self) -> Vec<Param> {
        self.params.borrow().clone()
    }

    pub fn len(&self) -> usize {
        self.params.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, name: &str) -> Option<Param> {
        self.params.borrow().iter().find(|p| p.name() == name).cloned()
    }

    /// Parameters whose name starts with `prefix`.
    pub fn with_prefix(&self, prefix: &str) -> Vec<Param> {
        self.params.borrow().iter().filter(|p| p.name().starts_with(prefix)).cloned().collect()
    }

    pub fn num_params(&self) -> usize {
        self.params.borrow().iter().map(Param::numel).sum()
    }

    pub fn num_trainable(&self) -> usize {
        self.params.borrow().iter().filter(|p| p.trainable()).map(Param::numel).sum()
    }

    pub fn zero_grad(&self) {
        for p in self.params.borrow().iter() {
            p.zero_grad();
        }
    }

    pub fn set_trainable(&self, on: bool) {
        for p in self.params.borrow().iter() {
            p.set_trainable(on);
        }
    }

    /// `(name, shape, values)` for every parameter, in registration order.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        self.params
            .borrow()
            .iter()
            .map(|p| (p.name().to_string(), p.shape().to_vec(), p.to_vec()))
            .collect()
    }

    /// Loads values by name. Every parameter of the store must be present.
    pub fn load(&self, named: &[(String, Vec<usize>, Vec<f64>)]) -> Result<()> {
        for p in self.params.borrow().iter() {
            let (_, shape, data) = named
                .iter()
                .find(|(n, _, _)| n == p.name())
                .ok_or_else(|| Error::MissingParam(p.name().to_string()))?;
            if shape.as_slice() != p.shape() || data.len() != p.numel() {
                return Err(Error::ShapeMismatch {
                    name: p.name().to_string(),
                    expected: p.shape().to_vec(),
                    found: shape.clone(),
                });
            }
            p.set_data(data.clone());
        }
        Ok(())
    }

    fn push(&self, p: Param) {
        let mut params = self.params.borrow_mut();
        assert!(params.iter().all(|q| q.name() != p.name()), "duplicate parameter name {}", p.name());
        params.push(p);
    }
}

/// Initial values for a new parameter.
#[derive(Clone, Debug)]
pub enum Init {
    Zeros,
    Ones,
    Const(f64),
    /// Uniform on `[-bound, bound]`.
    Uniform(f64),
    /// Uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    FanIn(usize),
    Values(Vec<f64>),
}

/// Creates parameters under a dotted name prefix, drawing random initial
/// values from one seeded stream shared by the whole tree.
#[derive(Clone)]
pub struct ParamBuilder {
    store: ParamStore,
    prefix: String,
    rng: Rc<RefCell<ChaCha8Rng>>,
}

impl ParamBuilder {
    pub fn new(seed: u64) -> Self {
        Self {
            store: ParamStore::new(),
            prefix: String::new(),
            rng: Rc::new(RefCell::new(ChaCha8Rng::seed_from_u64(seed))),
        }
    }

    pub fn store(&self) -> ParamStore {
        self.store.clone()
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn sub(&self, name: impl AsRef<str>) -> Self {
        let name = name.as_ref();
        let prefix = if self.prefix.is_empty() { name.to_string() } else { format!("{}.{}", self.prefix, name) };
        Self { store: self.store.clone(), prefix, rng: self.rng.clone() }
    }

    pub fn param(&self, name: &str, shape: &[usize], init: Init) -> Param {
        let n = numel_of(shape);
        let data = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Const(v) => vec![v; n],
            Init::Uniform(bound) => self.uniform(n, bound),
            Init::FanIn(fan_in) => self.uniform(n, 1.0 / (fan_in.max(1) as f64).sqrt()),
            Init::Values(v) => {
                assert_eq!(v.len(), n, "init values for {name}");
                v
            }
        };
        let full = if self.prefix.is_empty() { name.to_string() } else { format!("{}.{}", self.prefix, name) };
        let p = Param::new(full, data, shape);
        self.store.push(p.clone());
        p
    }

    fn uniform(&self, n: usize, bound: f64) -> Vec<f64> {
        let mut rng = self.rng.borrow_mut();
        if bound == 0.0 {
            return vec![0.0; n];
        }
        (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
    }
}
