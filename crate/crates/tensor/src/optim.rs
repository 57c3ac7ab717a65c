//! Adam and AdamW with bias correction, and cosine annealing.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::nn::Parameter;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Adam,
    AdamW,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimState {
    pub scheme: Scheme,
    pub lr: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl OptimState {
    pub fn new(scheme: Scheme, lr: f64, weight_decay: f64) -> Self {
        Self {
            scheme,
            lr,
            betas: (0.9, 0.999),
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(Scheme::Adam, lr, 0.0)
    }

    pub fn adamw(lr: f64, weight_decay: f64) -> Self {
        Self::new(Scheme::AdamW, lr, weight_decay)
    }

    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.m, &self.v)
    }

    /// One update over `params`. Parameters without a gradient are left
    /// untouched; if none has one the step is rejected.
    pub fn step(&mut self, params: &[Parameter]) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.tensor.numel()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() || self.m.iter().zip(params).any(|(m, p)| m.len() != p.tensor.numel()) {
            return Err(TensorError::invalid(
                "optimizer_step",
                "parameter set changed since first step",
            ));
        }
        let grads: Vec<Option<Vec<f64>>> = params.iter().map(|p| p.tensor.grad()).collect();
        if grads.iter().all(Option::is_none) {
            return Err(TensorError::EmptyGradients);
        }
        self.step += 1;
        let (b1, b2) = self.betas;
        let bc1 = 1.0 - b1.powi(self.step as i32);
        let bc2 = 1.0 - b2.powi(self.step as i32);
        let decay = match self.scheme {
            Scheme::AdamW => self.lr * self.weight_decay,
            Scheme::Adam => 0.0,
        };
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            let mut data = p.tensor.data_mut();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..g.len() {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                if decay != 0.0 {
                    data[j] -= decay * data[j];
                }
                data[j] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// `eta_min + (lr0 − eta_min)·(1 + cos(π·e/T_max))/2`, held at `eta_min`
/// past `T_max`.
pub fn cosine_anneal(lr0: f64, t_max: usize, eta_min: f64, epoch: usize) -> f64 {
    if t_max == 0 {
        return lr0;
    }
    let e = epoch.min(t_max) as f64;
    eta_min + (lr0 - eta_min) * (1.0 + (std::f64::consts::PI * e / t_max as f64).cos()) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Init, ParamStore};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_anneal(1e-3, 250, 1e-6, 0), 1e-3);
        assert!((cosine_anneal(1e-3, 250, 1e-6, 250) - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn step_without_grads_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        store.create("w", &[3], Init::Zeros, &mut rng).unwrap();
        let mut opt = OptimState::adam(0.1);
        assert!(matches!(opt.step(store.params()), Err(TensorError::EmptyGradients)));
    }
}
