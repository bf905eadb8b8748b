//! Minimal tape-based reverse-mode differentiation.
//!
//! Every value is a dense row-major matrix; vectors are `1 x n` rows and
//! mini-batches stack examples along rows. A [`Graph`] is built fresh for each
//! forward pass and records the ops applied to its nodes; [`Graph::backward`]
//! walks the tape in reverse and accumulates parameter gradients into the
//! [`ParamStore`] that owns the weights.
//!
//! Elements are generic over [`Real`] so the same model code runs in `f32`
//! for training and in `f64` for finite-difference gradient checks.

mod gradcheck;
mod graph;
mod lstm;
mod radam;

use std::fmt::{Debug, Display};
use std::ops::{AddAssign, MulAssign, SubAssign};

use ndarray::{Array2, LinalgScalar, ScalarOperand};
use num_traits::Float;
use rand::Rng;

pub use gradcheck::{check_gradients, GradCheck};
pub use graph::{l1_loss, Graph, Var};
pub use lstm::{lstm_step, LstmCell, LstmCellParams};
pub use radam::{radam_rho, OptimizerState, RAdamBranch, RAdamConfig};

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum AutodiffError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("loss must be a 1x1 scalar, got {0}x{1}")]
    NonScalarLoss(usize, usize),
    #[error("mask selects no rows")]
    EmptyMask,
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
}

pub trait Real:
    Float
    + LinalgScalar
    + ScalarOperand
    + Debug
    + Display
    + Default
    + AddAssign
    + SubAssign
    + MulAssign
    + Send
    + Sync
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
struct Param<T> {
    name: String,
    value: Array2<T>,
    grad: Array2<T>,
}

/// Named learnable tensors with their gradient accumulators.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2<T>) -> ParamId {
        let grad = Array2::zeros(value.raw_dim());
        self.params.push(Param {
            name: name.into(),
            value,
            grad,
        });
        ParamId(self.params.len() - 1)
    }

    /// Uniform(-bound, bound) initialization.
    pub fn add_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: (usize, usize),
        bound: f64,
        rng: &mut R,
    ) -> ParamId {
        let value = Array2::from_shape_simple_fn(shape, || {
            T::from_f64(rng.gen_range(-bound..=bound))
        });
        self.add(name, value)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &Array2<T> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array2<T> {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Array2<T> {
        &self.params[id.0].grad
    }

    pub(crate) fn grad_mut(&mut self, id: ParamId) -> &mut Array2<T> {
        &mut self.params[id.0].grad
    }

    pub(crate) fn value_and_grad_mut(&mut self, id: ParamId) -> (&mut Array2<T>, &Array2<T>) {
        let p = &mut self.params[id.0];
        (&mut p.value, &p.grad)
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(T::zero());
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.grad.iter())
            .map(|g| g.as_f64().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales all gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let scale = T::from_f64(max_norm / norm);
            for p in &mut self.params {
                p.grad.mapv_inplace(|g| g * scale);
            }
        }
        norm
    }

    pub fn all_finite(&self) -> bool {
        self.params
            .iter()
            .all(|p| p.value.iter().all(|v| v.is_finite()))
    }

    /// Copies values into another precision; gradients start at zero.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for p in &self.params {
            out.add(p.name.clone(), p.value.mapv(|v| U::from_f64(v.as_f64())));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn clip_scales_to_max_norm() {
        let mut store = ParamStore::<f64>::new();
        let a = store.add("a", array![[0.0, 0.0]]);
        store.grad_mut(a).assign(&array![[3.0, 4.0]]);
        assert_eq!(store.clip_grad_norm(1.0), 5.0);
        assert!((store.grad_norm() - 1.0).abs() < 1e-12);
        assert_eq!(store.clip_grad_norm(10.0), 1.0);
        store.zero_grad();
        assert_eq!(store.grad_norm(), 0.0);
    }

    #[test]
    fn cast_preserves_values() {
        let mut store = ParamStore::<f32>::new();
        store.add("w", array![[0.25f32, -1.5]]);
        let wide: ParamStore<f64> = store.cast();
        assert_eq!(wide.value(ParamId(0)), &array![[0.25f64, -1.5]]);
        assert_eq!(wide.find("w"), Some(ParamId(0)));
    }
}
