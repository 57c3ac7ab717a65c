//! Reconstruction metrics and the nearest-pilot interpolation baseline.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ChannelDtError, Result};
use crate::channel_sim::{SparseObservation, N_COND};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelMetrics {
    pub amp_mse: f64,
    pub phase_mse: f64,
}

/// Wraps an angle difference into `(−π, π]`.
fn wrap(d: f64) -> f64 {
    let w = (d + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    if w == -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        w
    }
}

/// Running sums over many `(2, H, W)` samples: amplitude error over every
/// cell, wrapped phase error over cells with `|H| > thr·max|H|` per sample.
#[derive(Clone, Debug)]
pub struct MetricsAccumulator {
    amp_threshold: f64,
    amp_sum: f64,
    amp_n: usize,
    phase_sum: f64,
    phase_n: usize,
}

impl MetricsAccumulator {
    pub fn new(amp_threshold: f64) -> Result<Self> {
        if !(amp_threshold > 0.0 && amp_threshold < 1.0) {
            return Err(ChannelDtError::Config(format!("amplitude threshold {amp_threshold}")));
        }
        Ok(Self {
            amp_threshold,
            amp_sum: 0.0,
            amp_n: 0,
            phase_sum: 0.0,
            phase_n: 0,
        })
    }

    /// `pred` and `truth` are one sample each, real block then imaginary block.
    pub fn add(&mut self, pred: &[f64], truth: &[f64]) -> Result<()> {
        if pred.len() != truth.len() || truth.len() % 2 != 0 {
            return Err(ChannelDtError::Shape(format!(
                "prediction {} vs truth {}",
                pred.len(),
                truth.len()
            )));
        }
        let cells = truth.len() / 2;
        let h = |v: &[f64], i: usize| Complex64::new(v[i], v[cells + i]);
        let max = (0..cells).map(|i| h(truth, i).norm()).fold(0.0, f64::max);
        for i in 0..cells {
            let (p, t) = (h(pred, i), h(truth, i));
            self.amp_sum += (p.norm() - t.norm()).powi(2);
            self.amp_n += 1;
            if t.norm() > self.amp_threshold * max {
                self.phase_sum += wrap(p.arg() - t.arg()).powi(2);
                self.phase_n += 1;
            }
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<ChannelMetrics> {
        if self.phase_n == 0 {
            return Err(ChannelDtError::EmptyPhaseMask);
        }
        Ok(ChannelMetrics {
            amp_mse: self.amp_sum / self.amp_n as f64,
            phase_mse: self.phase_sum / self.phase_n as f64,
        })
    }
}

pub fn channel_metrics(preds: &[&[f64]], truths: &[&[f64]], amp_threshold: f64) -> Result<ChannelMetrics> {
    if preds.len() != truths.len() {
        return Err(ChannelDtError::Shape(format!(
            "{} predictions for {} targets",
            preds.len(),
            truths.len()
        )));
    }
    let mut acc = MetricsAccumulator::new(amp_threshold)?;
    for (p, t) in preds.iter().zip(truths) {
        acc.add(p, t)?;
    }
    acc.finish()
}

/// Fills every cell of an `n_x × n_y` grid with the value of its nearest
/// masked cell (Euclidean index distance, lowest index on ties).
pub fn nearest_fill<T: Copy>(values: &[T], mask: &[bool], n_x: usize, n_y: usize) -> Result<Vec<T>> {
    let pilots: Vec<(usize, usize)> = (0..n_x * n_y)
        .filter(|&i| mask[i])
        .map(|i| (i / n_y, i % n_y))
        .collect();
    if pilots.is_empty() {
        return Err(ChannelDtError::EmptyMask);
    }
    Ok((0..n_x * n_y)
        .map(|idx| {
            let (x, y) = ((idx / n_y) as isize, (idx % n_y) as isize);
            let &(px, py) = pilots
                .iter()
                .min_by_key(|(px, py)| {
                    let (dx, dy) = (*px as isize - x, *py as isize - y);
                    dx * dx + dy * dy
                })
                .expect("non-empty");
            values[px * n_y + py]
        })
        .collect())
}

/// Nearest-pilot estimate of subcarrier `k` from a sparse observation.
pub fn baseline_interpolate(obs: &SparseObservation, k: usize) -> Result<Vec<Complex64>> {
    if k >= obs.n_c {
        return Err(ChannelDtError::Shape(format!("subcarrier {k} of {}", obs.n_c)));
    }
    let cells = obs.n_x * obs.n_y;
    let vals: Vec<Complex64> = (0..cells).map(|i| obs.values[i * obs.n_c + k]).collect();
    let mask: Vec<bool> = (0..cells).map(|i| obs.mask.values[i * obs.n_c + k]).collect();
    nearest_fill(&vals, &mask, obs.n_x, obs.n_y)
}

/// Nearest-pilot estimate `(2, H, W)` from a `(9, H, W)` condition slice.
pub fn baseline_from_condition(cond: &[f64], n_x: usize, n_y: usize) -> Result<Vec<f64>> {
    let cells = n_x * n_y;
    if cond.len() != N_COND * cells {
        return Err(ChannelDtError::Shape(format!(
            "condition has {} values, expected {}",
            cond.len(),
            N_COND * cells
        )));
    }
    let vals: Vec<(f64, f64)> = (0..cells).map(|i| (cond[i], cond[cells + i])).collect();
    let mask: Vec<bool> = cond[8 * cells..].iter().map(|m| *m > 0.5).collect();
    let filled = nearest_fill(&vals, &mask, n_x, n_y)?;
    let mut out = vec![0.0; 2 * cells];
    for (i, (re, im)) in filled.into_iter().enumerate() {
        out[i] = re;
        out[cells + i] = im;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_is_symmetric() {
        assert!((wrap(3.0 * std::f64::consts::PI / 2.0) + std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert_eq!(wrap(-std::f64::consts::PI), std::f64::consts::PI);
        assert_eq!(wrap(0.25), 0.25);
    }

    #[test]
    fn single_pilot_gives_constant_field() {
        let vals: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let mut mask = vec![false; 12];
        mask[7] = true;
        assert_eq!(nearest_fill(&vals, &mask, 3, 4).unwrap(), vec![7.0; 12]);
        assert!(nearest_fill(&vals, &[false; 12], 3, 4).is_err());
    }
}
