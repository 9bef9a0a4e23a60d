//! Nadam and the plateau-halving learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::Parameters;

/// Nesterov-accelerated Adam with a constant momentum coefficient:
///
/// ```text
/// m ← β1·m + (1−β1)·g
/// v ← β2·v + (1−β2)·g²
/// m̂ = β1·m / (1−β1^(t+1)) + (1−β1)·g / (1−β1^t)
/// v̂ = v / (1−β2^t)
/// θ ← θ − lr·m̂ / (√v̂ + ε)
/// ```
#[derive(Debug, Clone)]
pub struct Nadam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Default for Nadam {
    fn default() -> Self {
        Nadam::new(0.9, 0.999, 1e-8)
    }
}

impl Nadam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Nadam {
            beta1,
            beta2,
            eps,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update; fails without touching `params` if any gradient
    /// entry is not finite.
    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P, lr: f64) -> Result<()> {
        let grads = grads.tensors();
        if let Some(bad) = grads.iter().find(|g| g.data.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFiniteGradient(bad.name.clone()));
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.data.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let m_corr = b1 / (1.0 - b1.powi(t + 1));
        let g_corr = (1.0 - b1) / (1.0 - b1.powi(t));
        let v_corr = 1.0 / (1.0 - b2.powi(t));
        let targets = params.tensors_mut();
        for (((theta, g), m), v) in targets.into_iter().zip(&grads).zip(&mut self.m).zip(&mut self.v) {
            assert_eq!(theta.data.len(), g.data.len(), "gradient shape differs for {}", theta.name);
            for i in 0..g.data.len() {
                let gi = g.data[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = m_corr * m[i] + g_corr * gi;
                let v_hat = v_corr * v[i];
                theta.data[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// Smallest F1 gain that counts as an improvement.
pub const MIN_IMPROVEMENT: f64 = 1e-6;

/// Halves the learning rate after `patience` consecutive epochs without a
/// dev-F1 improvement, then starts counting again.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LrSchedule {
    initial: f64,
    lr: f64,
    patience: usize,
    best: Option<f64>,
    stale: usize,
    halvings: u32,
}

impl LrSchedule {
    pub fn new(lr: f64, patience: usize) -> Self {
        LrSchedule {
            initial: lr,
            lr,
            patience,
            best: None,
            stale: 0,
            halvings: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn halvings(&self) -> u32 {
        self.halvings
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    /// Records an end-of-epoch dev score; returns whether it improved.
    pub fn observe(&mut self, dev_f1: f64) -> bool {
        let improved = self.best.is_none_or(|b| dev_f1 >= b + MIN_IMPROVEMENT);
        if improved {
            self.best = Some(dev_f1);
            self.stale = 0;
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                self.halvings += 1;
                self.lr = self.initial * 0.5f64.powi(self.halvings as i32);
                self.stale = 0;
            }
        }
        improved
    }
}
