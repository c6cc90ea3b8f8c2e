//! Adam with bias correction plus reduce-on-plateau learning-rate decay.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::nn::network::ParamSet;
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

/// Adam optimizer state. Moments are kept in f64 regardless of the
/// parameter scalar type so long runs do not lose small updates.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    frozen: BTreeSet<String>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
            frozen: BTreeSet::new(),
        }
    }

    /// Mark parameters (by exact name) whose values and moments this
    /// optimizer must never touch.
    pub fn with_frozen(mut self, names: impl IntoIterator<Item = String>) -> Self {
        self.frozen = names.into_iter().collect();
        self
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update. `grads` must align with `params` order; non-finite
    /// gradients abort with the offending parameter named.
    pub fn step<S: Scalar>(
        &mut self,
        params: &mut ParamSet<S>,
        grads: &[Tensor<S>],
    ) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::State(format!(
                "optimizer got {} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        if self.m.is_empty() {
            for (_, t) in params.iter() {
                self.m.push(vec![0.0; t.numel()]);
                self.v.push(vec![0.0; t.numel()]);
            }
        }
        for (i, ((name, tensor), grad)) in params.iter().zip(grads).enumerate() {
            if tensor.numel() != grad.numel() {
                return Err(Error::ShapeMismatch(format!(
                    "gradient for {name:?} has shape {:?}, parameter is {:?}",
                    grad.shape(),
                    tensor.shape()
                )));
            }
            if !grad.is_finite() {
                return Err(Error::NonFinite(format!(
                    "gradient of parameter {name:?} at step {}",
                    self.step + 1
                )));
            }
            if self.m[i].len() != tensor.numel() {
                return Err(Error::State(format!(
                    "optimizer moments for {name:?} do not match the parameter"
                )));
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        for (i, ((name, tensor), grad)) in params.iter_mut().zip(grads).enumerate() {
            if self.frozen.contains(name) {
                continue;
            }
            let data = tensor.data_mut();
            for (j, g) in grad.data().iter().enumerate() {
                let g = g.into_f64();
                let m = self.beta1 * self.m[i][j] + (1.0 - self.beta1) * g;
                let v = self.beta2 * self.v[i][j] + (1.0 - self.beta2) * g * g;
                self.m[i][j] = m;
                self.v[i][j] = v;
                let update = self.lr * (m / bias1) / ((v / bias2).sqrt() + self.eps);
                data[j] = S::from_f64(data[j].into_f64() - update);
            }
        }
        Ok(())
    }
}

/// Reduce-on-plateau scheduler: multiply the learning rate by `factor`
/// when the observed loss has not improved by more than `min_delta` for
/// `patience` consecutive observations; a cooldown window after each decay
/// suppresses immediate repeats.
#[derive(Clone, Debug)]
pub struct PlateauScheduler {
    factor: f64,
    patience: usize,
    min_delta: f64,
    cooldown: usize,
    best: f64,
    num_bad: usize,
    cooldown_left: usize,
}

impl PlateauScheduler {
    pub fn new(factor: f64, patience: usize, min_delta: f64, cooldown: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&factor) || factor <= 0.0 {
            return Err(Error::Config(format!(
                "plateau factor must be in (0, 1), got {factor}"
            )));
        }
        if patience == 0 {
            return Err(Error::Config("plateau patience must be >= 1".into()));
        }
        Ok(PlateauScheduler {
            factor,
            patience,
            min_delta,
            cooldown,
            best: f64::INFINITY,
            num_bad: 0,
            cooldown_left: 0,
        })
    }

    /// Defaults used by the training pipeline: decay ×0.8 after 5 stale
    /// epochs, 2-epoch cooldown.
    pub fn standard() -> Self {
        Self::new(0.8, 5, 1e-5, 2).expect("standard constants are valid")
    }

    /// Record one validation loss; returns the possibly reduced rate to
    /// apply from now on.
    pub fn observe(&mut self, loss: f64, lr: f64) -> f64 {
        if loss < self.best - self.min_delta {
            self.best = loss;
            self.num_bad = 0;
        } else if self.cooldown_left > 0 {
            self.cooldown_left -= 1;
        } else {
            self.num_bad += 1;
            if self.num_bad >= self.patience {
                self.num_bad = 0;
                self.cooldown_left = self.cooldown;
                return lr * self.factor;
            }
        }
        lr
    }
}
