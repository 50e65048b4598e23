use std::collections::BTreeMap;
use std::ops::Index;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Graph, Real, Tensor, Var};
use crate::error::{Error, Result};

/// How a parameter tensor was initialized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    /// `U(-sqrt(6 / fan_in), +sqrt(6 / fan_in))`, for relu paths.
    HeUniform { fan_in: usize },
    /// `U(-sqrt(6 / (fan_in + fan_out)), +...)`, for sigmoid/tanh/linear paths.
    XavierUniform { fan_in: usize, fan_out: usize },
    Zeros,
    /// LSTM gate bias laid out as `[input, forget, cell, output]` blocks of
    /// `units`; the forget block starts at `forget`, the rest at zero.
    LstmBias { units: usize, forget: f64 },
}

impl Init {
    fn sample<F: Real>(&self, n: usize, rng: &mut impl Rng) -> Vec<F> {
        let uniform = |limit: f64, rng: &mut dyn rand::RngCore| -> Vec<F> {
            (0..n)
                .map(|_| F::of(rng.random_range(-limit..=limit)))
                .collect()
        };
        match *self {
            Init::HeUniform { fan_in } => uniform((6.0 / fan_in as f64).sqrt(), rng),
            Init::XavierUniform { fan_in, fan_out } => {
                uniform((6.0 / (fan_in + fan_out) as f64).sqrt(), rng)
            }
            Init::Zeros => vec![F::zero(); n],
            Init::LstmBias { units, forget } => (0..n)
                .map(|i| if i / units == 1 { F::of(forget) } else { F::zero() })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<F> {
    pub value: Tensor<F>,
    pub init: Init,
}

/// Named learnable tensors, iterated in name order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<F> {
    params: BTreeMap<String, Param<F>>,
}

impl<F: Real> Default for ParamStore<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        Self {
            params: BTreeMap::new(),
        }
    }

    /// Draw a new parameter from `init`. Names must be unique.
    pub fn init(
        &mut self,
        name: &str,
        shape: impl Into<Vec<usize>>,
        init: Init,
        rng: &mut impl Rng,
    ) -> Result<()> {
        let shape = shape.into();
        let n = shape.iter().product();
        let value = Tensor::new(shape, init.sample(n, rng))?;
        self.insert(name, Param { value, init })
    }

    pub fn insert(&mut self, name: &str, param: Param<F>) -> Result<()> {
        if self.params.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        self.params.insert(name.to_string(), param);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.params.get(name).map(|p| &p.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<F>> {
        self.params.get_mut(name).map(|p| &mut p.value)
    }

    pub fn param(&self, name: &str) -> Option<&Param<F>> {
        self.params.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<F>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param<F>)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn cast<G: Real>(&self) -> ParamStore<G> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|(k, p)| {
                    (
                        k.clone(),
                        Param {
                            value: p.value.cast(),
                            init: p.init,
                        },
                    )
                })
                .collect(),
        }
    }

    /// Add every parameter to `graph` as a trainable leaf.
    pub fn register(&self, graph: &mut Graph<F>) -> ParamVars {
        ParamVars {
            vars: self
                .params
                .iter()
                .map(|(k, p)| (k.clone(), graph.param(p.value.clone())))
                .collect(),
        }
    }

    /// Gradients of the graph's last backward target, keyed like the store.
    pub fn gradients(&self, graph: &Graph<F>, vars: &ParamVars) -> Gradients<F> {
        Gradients {
            grads: vars
                .vars
                .iter()
                .map(|(k, &v)| (k.clone(), graph.grad(v)))
                .collect(),
        }
    }
}

/// Graph handles of a registered [`ParamStore`].
#[derive(Clone, Debug)]
pub struct ParamVars {
    vars: BTreeMap<String, Var>,
}

impl ParamVars {
    pub fn get(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }
}

impl Index<&str> for ParamVars {
    type Output = Var;

    fn index(&self, name: &str) -> &Var {
        self.vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} was not registered"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<F> {
    grads: BTreeMap<String, Tensor<F>>,
}

impl<F: Real> Gradients<F> {
    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.grads.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<F>)> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Element-wise accumulation, for summing per-example gradients.
    pub fn accumulate(&mut self, other: &Gradients<F>) {
        for (k, g) in self.grads.iter_mut() {
            if let Some(o) = other.grads.get(k) {
                for (a, &b) in g.data_mut().iter_mut().zip(o.data()) {
                    *a += b;
                }
            }
        }
    }

    pub fn max_abs(&self) -> F {
        self.grads
            .values()
            .flat_map(|t| t.data().iter())
            .fold(F::zero(), |m, &v| m.max(v.abs()))
    }
}
