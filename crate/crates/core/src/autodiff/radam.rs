//! Rectified Adam.
//!
//! Adam's adaptive step has unbounded variance in the first iterations
//! because the second-moment estimate is built from very few samples. RAdam
//! tracks the length of the approximated simple moving average,
//!
//! ```text
//! rho_inf = 2 / (1 - beta2) - 1
//! rho_t   = rho_inf - 2 t beta2^t / (1 - beta2^t)
//! ```
//!
//! and while `rho_t <= 4` takes a plain bias-corrected momentum step. After
//! that it takes the adaptive step scaled by the rectification term
//!
//! ```text
//! r_t = sqrt((rho_t - 4)(rho_t - 2) rho_inf / ((rho_inf - 4)(rho_inf - 2) rho_t))
//! ```

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{AutodiffError, ParamStore, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RAdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for RAdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub fn radam_rho(t: u64, beta2: f64) -> f64 {
    let rho_inf = 2.0 / (1.0 - beta2) - 1.0;
    let b2t = beta2.powf(t as f64);
    rho_inf - 2.0 * t as f64 * b2t / (1.0 - b2t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RAdamBranch {
    /// Bias-corrected momentum only.
    Momentum,
    /// Variance-rectified adaptive step with rectification factor `r`.
    Rectified { r: f64 },
}

#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    pub config: RAdamConfig,
    pub step: u64,
    pub m: Vec<Array2<T>>,
    pub v: Vec<Array2<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(config: RAdamConfig, store: &ParamStore<T>) -> Self {
        let zeros = || {
            store
                .ids()
                .map(|id| Array2::zeros(store.value(id).raw_dim()))
                .collect::<Vec<_>>()
        };
        Self {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    fn check_shapes(&self, store: &ParamStore<T>) -> Result<(), AutodiffError> {
        if self.m.len() != store.len() || self.v.len() != store.len() {
            return Err(AutodiffError::ShapeMismatch(format!(
                "optimizer tracks {} tensors, store has {}",
                self.m.len(),
                store.len()
            )));
        }
        for id in store.ids() {
            let dim = store.value(id).dim();
            if self.m[id.index()].dim() != dim || self.v[id.index()].dim() != dim {
                return Err(AutodiffError::ShapeMismatch(format!(
                    "moment shape for {} differs from parameter {:?}",
                    store.name(id),
                    dim
                )));
            }
        }
        Ok(())
    }

    /// Applies one update from the gradients currently accumulated in the
    /// store. Gradients are left untouched.
    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<RAdamBranch, AutodiffError> {
        self.check_shapes(store)?;
        self.step += 1;
        let RAdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as f64;
        let bias1 = 1.0 - beta1.powf(t);
        let bias2 = 1.0 - beta2.powf(t);
        let rho_inf = 2.0 / (1.0 - beta2) - 1.0;
        let rho = radam_rho(self.step, beta2);
        let branch = if rho > 4.0 {
            let r = ((rho - 4.0) * (rho - 2.0) * rho_inf
                / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho))
                .sqrt();
            RAdamBranch::Rectified { r }
        } else {
            RAdamBranch::Momentum
        };

        let (b1, b2) = (T::from_f64(beta1), T::from_f64(beta2));
        let (c1, c2) = (T::one() - b1, T::one() - b2);
        let inv_bias1 = T::from_f64(1.0 / bias1);
        let inv_sqrt_bias2 = T::from_f64(1.0 / bias2.sqrt());
        let eps = T::from_f64(eps);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let (value, grad) = store.value_and_grad_mut(id);
            let m = &mut self.m[id.index()];
            let v = &mut self.v[id.index()];
            ndarray::Zip::from(value)
                .and(grad)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + c1 * g;
                    *v = b2 * *v + c2 * g * g;
                    let m_hat = *m * inv_bias1;
                    match branch {
                        RAdamBranch::Momentum => *p -= T::from_f64(lr) * m_hat,
                        RAdamBranch::Rectified { r } => {
                            let v_hat = v.sqrt() * inv_sqrt_bias2;
                            *p -= T::from_f64(lr * r) * m_hat / (v_hat + eps);
                        }
                    }
                });
        }
        Ok(branch)
    }
}
