//! Named trainable parameters with accumulated gradients.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::autodiff::tape::Gradients;
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};
use crate::float::Float;

static NEXT_STORE_ID: AtomicU64 = AtomicU64::new(1);

fn next_id() -> u64 {
    NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed)
}

/// Index of a parameter inside its [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone)]
pub struct Parameter<T: Float> {
    name: String,
    value: Tensor<T>,
    grad: Tensor<T>,
}

impl<T: Float> Parameter<T> {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn grad(&self) -> &Tensor<T> {
        &self.grad
    }
}

/// Owns the parameters of one model. Each store has a process-unique id so
/// gradients from a shared tape are routed to the right owner.
#[derive(Debug)]
pub struct ParamStore<T: Float> {
    id: u64,
    frozen: bool,
    params: Vec<Parameter<T>>,
}

impl<T: Float> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Float> Clone for ParamStore<T> {
    /// The clone is an independent store with a fresh id.
    fn clone(&self) -> Self {
        ParamStore {
            id: next_id(),
            frozen: self.frozen,
            params: self.params.clone(),
        }
    }
}

impl<T: Float> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            id: next_id(),
            frozen: false,
            params: Vec::new(),
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// While frozen, parameters bind as constants and receive no gradient.
    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let grad = Tensor::zeros(value.shape());
        self.params.push(Parameter {
            name: name.into(),
            value,
            grad,
        });
        ParamId(self.params.len() - 1)
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

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].grad
    }

    /// Replace a value, keeping the shape.
    pub fn set_value(&mut self, id: ParamId, value: Tensor<T>) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(Error::shape("set_value", p.value.shape(), value.shape()));
        }
        p.value = value;
        Ok(())
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Simultaneous mutable access to value and gradient, for optimizers.
    pub(crate) fn values_and_grads_mut(&mut self) -> impl Iterator<Item = (&mut Tensor<T>, &Tensor<T>)> {
        self.params.iter_mut().map(|p| (&mut p.value, &p.grad))
    }

    pub fn num_elements(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad = Tensor::zeros(p.value.shape());
        }
    }

    /// Add every gradient in `grads` that belongs to this store.
    pub fn accumulate(&mut self, grads: &Gradients<T>) {
        for (store, index, g) in grads.param_grads() {
            if store == self.id {
                self.params[index].grad.add_assign(g);
            }
        }
    }

    /// Sum of squares of all gradients.
    pub fn grad_norm_sq(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.grad.data().iter())
            .map(|g| g.as_f64() * g.as_f64())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.all_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;

    #[test]
    fn gradients_route_to_owning_store() {
        let mut a = ParamStore::<f64>::new();
        let mut b = ParamStore::<f64>::new();
        let pa = a.add("w", Tensor::full(&[2], 3.0));
        let pb = b.add("w", Tensor::full(&[2], 5.0));
        let tape = Tape::new();
        let (va, vb) = (tape.param(&a, pa), tape.param(&b, pb));
        let loss = tape.sum(tape.mul(va, vb).unwrap());
        let grads = tape.backward(loss).unwrap();
        a.accumulate(&grads);
        b.accumulate(&grads);
        assert_eq!(a.grad(pa).data(), &[5.0, 5.0]);
        assert_eq!(b.grad(pb).data(), &[3.0, 3.0]);
        a.accumulate(&grads);
        assert_eq!(a.grad(pa).data(), &[10.0, 10.0]);
        a.zero_grad();
        assert_eq!(a.grad(pa).data(), &[0.0, 0.0]);
    }

    #[test]
    fn frozen_store_receives_nothing() {
        let mut a = ParamStore::<f64>::new();
        let p = a.add("w", Tensor::full(&[1], 2.0));
        a.set_frozen(true);
        let tape = Tape::new();
        let v = tape.param(&a, p);
        let x = tape.leaf(Tensor::full(&[1], 4.0));
        let loss = tape.sum(tape.mul(v, x).unwrap());
        let grads = tape.backward(loss).unwrap();
        a.accumulate(&grads);
        assert_eq!(a.grad(p).data(), &[0.0]);
        assert_eq!(grads.get(x).unwrap().data(), &[2.0]);
    }

    #[test]
    fn clone_gets_fresh_id() {
        let a = ParamStore::<f32>::new();
        assert_ne!(a.clone().id(), a.id());
    }
}
