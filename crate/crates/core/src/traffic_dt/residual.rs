//! Stochastic residual traffic and the exact total = baseline + residual split.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Result, TrafficError, TRAFFIC_QUANTUM};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResidualConfig {
    pub phi: f64,
    /// Innovation standard deviation, Mbps.
    pub sigma: f64,
    /// Share of innovation variance drawn from a factor common to the plane.
    #[serde(default)]
    pub plane_weight: f64,
    /// Per-entry probability that an innovation is a burst.
    #[serde(default)]
    pub burst_rate: f64,
    /// Multiplier applied to burst innovations.
    #[serde(default = "default_burst_magnitude")]
    pub burst_magnitude: f64,
}

fn default_burst_magnitude() -> f64 {
    1.0
}

impl Default for ResidualConfig {
    fn default() -> Self {
        Self {
            phi: 0.9,
            sigma: 1.0,
            plane_weight: 0.0,
            burst_rate: 0.0,
            burst_magnitude: default_burst_magnitude(),
        }
    }
}

impl ResidualConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi.abs() < 1.0) {
            return Err(TrafficError::Unstable(self.phi.abs()));
        }
        let ok = self.sigma >= 0.0
            && self.sigma.is_finite()
            && (0.0..=1.0).contains(&self.plane_weight)
            && (0.0..=1.0).contains(&self.burst_rate)
            && self.burst_magnitude >= 0.0
            && self.burst_magnitude.is_finite();
        if !ok {
            return Err(TrafficError::Config(format!("{self:?}")));
        }
        Ok(())
    }

    /// Stationary variance `σ²/(1−φ²)` without bursts.
    pub fn stationary_variance(&self) -> f64 {
        self.sigma * self.sigma / (1.0 - self.phi * self.phi)
    }
}

/// Per-beam traffic of every satellite at one slot, satellite-major, Mbps.
#[derive(Clone, Debug, PartialEq)]
pub struct TrafficSnapshot {
    pub slot: usize,
    pub n_beams: usize,
    pub values: Vec<f64>,
}

impl TrafficSnapshot {
    pub fn new(slot: usize, n_beams: usize, values: Vec<f64>) -> Result<Self> {
        if n_beams == 0 || values.len() % n_beams != 0 {
            return Err(TrafficError::Shape(format!(
                "{} values for {n_beams} beams",
                values.len()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(TrafficError::NegativeTraffic {
                slot,
                node: i / n_beams,
                value: *v,
            });
        }
        Ok(Self { slot, n_beams, values })
    }

    pub fn n_sats(&self) -> usize {
        self.values.len() / self.n_beams
    }
}

/// Rounds to the nearest multiple of [`TRAFFIC_QUANTUM`].
pub fn quantize(x: f64) -> f64 {
    (x / TRAFFIC_QUANTUM).round() * TRAFFIC_QUANTUM
}

/// AR-1 residuals `r_{t+1} = φ·r_t + e_t`, laid out `(slot, node, beam)`.
///
/// Each innovation is `√(1−w)·ε + √w·η` with `ε` private to the entry and `η`
/// shared by all nodes of a plane (same beam index), so every entry is AR-1
/// with innovation variance `σ²`. A burst multiplies the innovation by
/// `burst_magnitude`. Slot 0 is drawn from the stationary distribution.
pub fn synthesize_residual(
    n_slots: usize,
    planes: &[usize],
    n_beams: usize,
    cfg: &ResidualConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if n_beams == 0 {
        return Err(TrafficError::Config("n_beams must be at least 1".into()));
    }
    let n_nodes = planes.len();
    let n_planes = planes.iter().max().map_or(0, |p| p + 1);
    let (own, shared) = ((1.0 - cfg.plane_weight).sqrt(), cfg.plane_weight.sqrt());
    let start = 1.0 / (1.0 - cfg.phi * cfg.phi).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = n_nodes * n_beams;
    let mut out = Vec::with_capacity(n_slots * width);
    let mut factor = vec![0.0; n_planes * n_beams];
    for t in 0..n_slots {
        for f in factor.iter_mut() {
            *f = rng.sample(StandardNormal);
        }
        for (i, &p) in planes.iter().enumerate() {
            for b in 0..n_beams {
                let z: f64 = rng.sample(StandardNormal);
                let u: f64 = rng.random();
                let mut e = cfg.sigma * (own * z + shared * factor[p * n_beams + b]);
                if u < cfg.burst_rate {
                    e *= cfg.burst_magnitude;
                }
                let r = if t == 0 {
                    start * e
                } else {
                    cfg.phi * out[(t - 1) * width + i * n_beams + b] + e
                };
                out.push(r);
            }
        }
    }
    Ok(out)
}

fn check_shapes(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(TrafficError::Shape(format!("{} vs {} entries", a.len(), b.len())));
    }
    Ok(())
}

/// `X^R = X − X^P`. Exact when both operands lie on the traffic quantum grid.
pub fn decompose(total: &[f64], baseline: &[f64]) -> Result<Vec<f64>> {
    check_shapes(total, baseline)?;
    Ok(total.iter().zip(baseline).map(|(x, p)| x - p).collect())
}

/// `X = X^P + X^R`.
pub fn recompose(residual: &[f64], baseline: &[f64]) -> Result<Vec<f64>> {
    check_shapes(residual, baseline)?;
    Ok(residual.iter().zip(baseline).map(|(r, p)| p + r).collect())
}
