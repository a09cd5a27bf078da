use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use super::{ModelError, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Named parameter tensors, ordered by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        self.tensors.insert(name.into(), t.with_requires_grad(false));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar count, optionally restricted to names with a prefix.
    pub fn count(&self, prefix: &str) -> usize {
        self.tensors
            .iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, t)| t.numel())
            .sum()
    }

    /// Records every tensor on the graph; `trainable` decides which get gradients.
    pub fn bind(&self, g: &mut Graph, trainable: impl Fn(&str) -> bool) -> Binding {
        let vars = self
            .tensors
            .iter()
            .map(|(n, t)| {
                let v = if trainable(n) {
                    g.param(t.clone())
                } else {
                    g.constant(t.clone())
                };
                (n.clone(), v)
            })
            .collect();
        Binding { vars }
    }
}

/// Parameter name to graph variable, for one forward pass.
#[derive(Debug, Clone)]
pub struct Binding {
    vars: HashMap<String, Var>,
}

impl Binding {
    /// Pairs names with already-recorded variables.
    pub fn from_vars<'a>(names: impl IntoIterator<Item = &'a str>, vars: &[Var]) -> Binding {
        Binding {
            vars: names.into_iter().map(str::to_string).zip(vars.iter().copied()).collect(),
        }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::MissingParam(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}

pub(crate) fn uniform<R: Rng>(rng: &mut R, shape: &[usize], bound: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

/// Weight `[fan_in, fan_out]` and bias `[fan_out]`, both uniform in `±1/sqrt(fan_in)`.
pub(crate) fn init_linear<R: Rng>(store: &mut ParamStore, rng: &mut R, name: &str, fan_in: usize, fan_out: usize) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    store.insert(format!("{name}.w"), uniform(rng, &[fan_in, fan_out], bound));
    store.insert(format!("{name}.b"), uniform(rng, &[fan_out], bound));
}

pub(crate) fn init_layer_norm(store: &mut ParamStore, name: &str, width: usize) {
    store.insert(format!("{name}.g"), Tensor::ones(&[width]));
    store.insert(format!("{name}.b"), Tensor::zeros(&[width]));
}

/// `x W + b` using parameters `{name}.w`, `{name}.b`.
pub(crate) fn linear(g: &mut Graph, p: &Binding, name: &str, x: Var) -> Result<Var> {
    let w = p.var(&format!("{name}.w"))?;
    let b = p.var(&format!("{name}.b"))?;
    let y = g.matmul(x, w)?;
    Ok(g.add_row(y, b)?)
}

pub(crate) fn layer_norm(g: &mut Graph, p: &Binding, name: &str, x: Var) -> Result<Var> {
    let gamma = p.var(&format!("{name}.g"))?;
    let beta = p.var(&format!("{name}.b"))?;
    Ok(g.layer_norm(x, gamma, beta)?)
}
