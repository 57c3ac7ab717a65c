//! Linear variance schedule, closed-form forward noising and the posterior
//! mean used by the reverse chain.

use serde::{Deserialize, Serialize};

use super::{ChannelDtError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(rename = "K")]
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            beta_min: 1e-4,
            beta_max: 0.02,
        }
    }
}

/// Arrays are indexed by `k − 1` for steps `k = 1..=K`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    pub steps: usize,
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    pub posterior_beta: Vec<f64>,
}

impl NoiseSchedule {
    pub fn linear(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if steps == 0 {
            return Err(ChannelDtError::Schedule("K must be ≥ 1".into()));
        }
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            return Err(ChannelDtError::Schedule(format!(
                "need 0 < beta_min ≤ beta_max < 1, got [{beta_min}, {beta_max}]"
            )));
        }
        let beta: Vec<f64> = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_min
                } else {
                    beta_min + (beta_max - beta_min) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(steps);
        let mut acc = 1.0;
        for a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        let posterior_beta = (0..steps)
            .map(|i| {
                let prev = if i == 0 { 1.0 } else { alpha_bar[i - 1] };
                (1.0 - prev) * beta[i] / (1.0 - alpha_bar[i])
            })
            .collect();
        Ok(Self {
            steps,
            beta,
            alpha,
            alpha_bar,
            posterior_beta,
        })
    }

    pub fn from_config(cfg: &ScheduleConfig) -> Result<Self> {
        Self::linear(cfg.steps, cfg.beta_min, cfg.beta_max)
    }

    fn check(&self, k: usize) -> Result<usize> {
        if k == 0 || k > self.steps {
            return Err(ChannelDtError::StepRange { k, steps: self.steps });
        }
        Ok(k - 1)
    }

    /// `ᾱ_k` for `k ∈ 0..=K` with `ᾱ₀ = 1`.
    pub fn alpha_bar_at(&self, k: usize) -> f64 {
        if k == 0 {
            1.0
        } else {
            self.alpha_bar[k - 1]
        }
    }

    /// `x_k = √ᾱ_k·x0 + √(1−ᾱ_k)·ε`.
    pub fn forward_noise(&self, x0: &[f64], k: usize, eps: &[f64]) -> Result<Vec<f64>> {
        let i = self.check(k)?;
        if x0.len() != eps.len() {
            return Err(ChannelDtError::Shape(format!(
                "x0 has {} values, ε has {}",
                x0.len(),
                eps.len()
            )));
        }
        let (a, b) = (self.alpha_bar[i].sqrt(), (1.0 - self.alpha_bar[i]).sqrt());
        Ok(x0.iter().zip(eps).map(|(x, e)| a * x + b * e).collect())
    }

    /// Coefficients `(c0, ck)` of `μ = c0·x̂0 + ck·x_k`; exactly `(1, 0)` at
    /// `k = 1`.
    pub fn posterior_coefficients(&self, k: usize) -> Result<(f64, f64)> {
        let i = self.check(k)?;
        if k == 1 {
            return Ok((1.0, 0.0));
        }
        let prev = self.alpha_bar_at(k - 1);
        let denom = 1.0 - self.alpha_bar[i];
        Ok((
            prev.sqrt() * self.beta[i] / denom,
            self.alpha[i].sqrt() * (1.0 - prev) / denom,
        ))
    }

    pub fn posterior_mean(&self, x0_hat: &[f64], x_k: &[f64], k: usize) -> Result<Vec<f64>> {
        let (c0, ck) = self.posterior_coefficients(k)?;
        if x0_hat.len() != x_k.len() {
            return Err(ChannelDtError::Shape(format!(
                "x̂0 has {} values, x_k has {}",
                x0_hat.len(),
                x_k.len()
            )));
        }
        Ok(x0_hat.iter().zip(x_k).map(|(a, b)| c0 * a + ck * b).collect())
    }
}
