//! Ancestral reverse sampling with an `x̂0`-predicting denoiser.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{ChannelDtError, Denoiser, NoiseSchedule, Result};

/// Denoiser that returns a fixed clean tensor regardless of its input.
pub struct OracleDenoiser {
    pub x0: Vec<f64>,
}

impl Denoiser for OracleDenoiser {
    fn denoise(&self, x_k: &[f64], _k: usize, _cond: &[f64], _shape: [usize; 3]) -> Result<Vec<f64>> {
        if x_k.len() != self.x0.len() {
            return Err(ChannelDtError::Shape(format!(
                "oracle holds {} values, x_k has {}",
                self.x0.len(),
                x_k.len()
            )));
        }
        Ok(self.x0.clone())
    }
}

/// Runs `k = K..1` from `x_K ~ 𝒩(0, I)`, calling `on_step(k − 1, x_{k−1})`
/// after each update. Returns `x_0` as `(B, 2, H, W)`.
pub fn reverse_sample_traced<D, R, F>(
    model: &D,
    cond: &[f64],
    shape: [usize; 3],
    schedule: &NoiseSchedule,
    rng: &mut R,
    mut on_step: F,
) -> Result<Vec<f64>>
where
    D: Denoiser + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(usize, &[f64]),
{
    let n = shape[0] * 2 * shape[1] * shape[2];
    let mut x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    for k in (1..=schedule.steps).rev() {
        let x0_hat = model.denoise(&x, k, cond, shape)?;
        let mut next = schedule.posterior_mean(&x0_hat, &x, k)?;
        if k > 1 {
            let sd = schedule.posterior_beta[k - 1].sqrt();
            for v in next.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += sd * z;
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(ChannelDtError::NonFinite { k });
        }
        x = next;
        on_step(k - 1, &x);
    }
    Ok(x)
}

pub fn reverse_sample<D, R>(
    model: &D,
    cond: &[f64],
    shape: [usize; 3],
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<Vec<f64>>
where
    D: Denoiser + ?Sized,
    R: Rng + ?Sized,
{
    reverse_sample_traced(model, cond, shape, schedule, rng, |_, _| {})
}
