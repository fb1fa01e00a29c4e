//! Learnable parameters and non-learnable layer state (moving statistics).

use std::collections::HashMap;

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// A learnable tensor with its gradient slot.
#[derive(Debug, Clone)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StateId(pub(crate) usize);

/// All parameters and state tensors of a model, in a stable creation order.
/// The order is what checkpoints, the optimizer and `param_count` rely on.
#[derive(Debug, Clone, Default)]
pub struct ParamSet<T> {
    params: Vec<Parameter<T>>,
    state: Vec<(String, Tensor<T>)>,
    by_name: HashMap<String, ParamId>,
    state_by_name: HashMap<String, StateId>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet {
            params: Vec::new(),
            state: Vec::new(),
            by_name: HashMap::new(),
            state_by_name: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let id = ParamId(self.params.len());
        let grad = Tensor::zeros(value.shape().to_vec());
        self.params.push(Parameter {
            name: name.clone(),
            value,
            grad,
        });
        self.by_name.insert(name, id);
        id
    }

    pub fn add_state(&mut self, name: impl Into<String>, value: Tensor<T>) -> StateId {
        let name = name.into();
        assert!(
            !self.state_by_name.contains_key(&name),
            "duplicate state name {name}"
        );
        let id = StateId(self.state.len());
        self.state.push((name.clone(), value));
        self.state_by_name.insert(name, id);
        id
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    /// Name of the i-th parameter in creation order.
    pub fn get_name(&self, i: usize) -> &str {
        &self.params[i].name
    }

    pub fn state(&self, id: StateId) -> &Tensor<T> {
        &self.state[id.0].1
    }

    pub fn state_mut(&mut self, id: StateId) -> &mut Tensor<T> {
        &mut self.state[id.0].1
    }

    /// Mutable access to two distinct state tensors at once (batch norm needs
    /// its moving mean and variance together).
    pub fn state_pair_mut(&mut self, a: StateId, b: StateId) -> (&mut Tensor<T>, &mut Tensor<T>) {
        assert_ne!(a.0, b.0, "state_pair_mut needs distinct ids");
        if a.0 < b.0 {
            let (lo, hi) = self.state.split_at_mut(b.0);
            (&mut lo[a.0].1, &mut hi[0].1)
        } else {
            let (lo, hi) = self.state.split_at_mut(a.0);
            (&mut hi[0].1, &mut lo[b.0].1)
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn iter_state(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.state.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn lookup_state(&self, name: &str) -> Option<StateId> {
        self.state_by_name.get(name).copied()
    }

    /// Total learnable scalar count (state tensors excluded).
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            for g in p.grad.data_mut() {
                *g = T::zero();
            }
        }
    }

    /// Adds `grad` into the parameter's gradient slot.
    pub(crate) fn accumulate_grad(&mut self, id: ParamId, grad: &Tensor<T>) {
        let p = &mut self.params[id.0];
        debug_assert_eq!(p.value.shape(), grad.shape());
        for (g, d) in p.grad.data_mut().iter_mut().zip(grad.data()) {
            *g += *d;
        }
    }

    /// Overwrites a parameter's value, keeping shape. Used by checkpoint load
    /// and the finite-difference probes of the gradient checker.
    pub fn set_value(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(Error::Shape {
                op: "ParamSet::set_value",
                lhs: p.value.shape().to_vec(),
                rhs: value.shape().to_vec(),
            });
        }
        p.value = value;
        Ok(())
    }

    /// Converts every parameter and state tensor to another precision.
    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        let mut out = ParamSet::new();
        for p in &self.params {
            out.add(p.name.clone(), p.value.cast());
        }
        for (n, t) in &self.state {
            out.add_state(n.clone(), t.cast());
        }
        out
    }
}
