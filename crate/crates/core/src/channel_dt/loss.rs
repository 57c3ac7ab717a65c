//! Amplitude-weighted squared error plus L1.

use serde::{Deserialize, Serialize};

use leo_twin_tensor::Tensor;

use super::{ChannelDtError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub lambda_l1: f64,
    pub lambda_w: f64,
    pub tau_amp: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_l1: 0.05,
            lambda_w: 4.0,
            tau_amp: 0.05,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_l1 >= 0.0) || !(self.lambda_w >= 0.0) || !(self.tau_amp > 0.0 && self.tau_amp < 1.0) {
            return Err(ChannelDtError::Config(format!("{self:?}")));
        }
        Ok(())
    }
}

/// `M = 1 + λ_w·1[|x0| > τ_amp·max|x0|]` over one sample.
pub fn amplitude_weight(x0: &[f64], lambda_w: f64, tau_amp: f64) -> Vec<f64> {
    let max = x0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    x0.iter()
        .map(|v| if v.abs() > tau_amp * max { 1.0 + lambda_w } else { 1.0 })
        .collect()
}

fn check_weights(m: &[f64], lambda: f64) -> Result<()> {
    if let Some(w) = m.iter().find(|w| !(**w >= 0.0)) {
        return Err(ChannelDtError::NegativeWeight(*w));
    }
    if !(lambda >= 0.0) {
        return Err(ChannelDtError::NegativeWeight(lambda));
    }
    Ok(())
}

/// `(1/B)·Σ_b [ Σ M ⊙ (x0 − x̂0)² + λ·Σ |x0 − x̂0| ]` for batch-first tensors.
pub fn hybrid_loss(x0: &Tensor, pred: &Tensor, weight: &Tensor, lambda: f64) -> Result<Tensor> {
    if x0.shape() != pred.shape() || x0.shape() != weight.shape() || x0.ndim() == 0 {
        return Err(ChannelDtError::Shape(format!(
            "x0 {:?}, x̂0 {:?}, M {:?}",
            x0.shape(),
            pred.shape(),
            weight.shape()
        )));
    }
    check_weights(&weight.data(), lambda)?;
    let batch = x0.shape()[0] as f64;
    let diff = x0.sub(pred)?;
    let sq = diff.square()?.mul(weight)?.sum()?;
    let l1 = diff.abs()?.sum()?.scale(lambda)?;
    Ok(sq.add(&l1)?.scale(1.0 / batch)?)
}

/// Plain evaluation of [`hybrid_loss`] for a batch of `batch` samples.
pub fn hybrid_loss_value(x0: &[f64], pred: &[f64], weight: &[f64], lambda: f64, batch: usize) -> Result<f64> {
    if x0.len() != pred.len() || x0.len() != weight.len() || batch == 0 {
        return Err(ChannelDtError::Shape(format!(
            "x0 {}, x̂0 {}, M {}, batch {batch}",
            x0.len(),
            pred.len(),
            weight.len()
        )));
    }
    check_weights(weight, lambda)?;
    let total: f64 = x0
        .iter()
        .zip(pred)
        .zip(weight)
        .map(|((a, b), m)| m * (a - b) * (a - b) + lambda * (a - b).abs())
        .sum();
    Ok(total / batch as f64)
}
