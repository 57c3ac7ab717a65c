//! Ground-truth CSI synthesis over the grid and sparse, noisy, delayed pilot
//! observations.

mod dataset;

pub use dataset::{
    delay_slots, generate_channel_dataset, load_channel_dataset, physics_series, ChannelDataset, ChannelDatasetConfig,
    ChannelInputs, ChannelManifest, ChannelSample, SampleEntry, SplitRange, BLOB_LAYOUT,
};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo_data::{ClassTable, GeoError};
use crate::orbital::{OrbitalError, C_LIGHT};
use crate::physics_tensor::{PhysicsError, PhysicsTensor, CH_FSPL, CH_GAIN, CH_LAND, CH_RAIN, CH_SCINT, N_PHYS};

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("invalid channel parameters: {0}")]
    Params(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no tap profile for land-cover class {0}")]
    MissingTaps(u32),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Orbital(#[from] OrbitalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ChannelError>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tap {
    pub delay_ns: f64,
    pub power_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassTaps {
    pub class: u32,
    pub taps: Vec<Tap>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkBudget {
    pub tx_power_dbm: f64,
    pub noise_sigma: f64,
    pub taps: Vec<ClassTaps>,
}

impl Default for LinkBudget {
    fn default() -> Self {
        let two_tap = vec![
            Tap {
                delay_ns: 0.0,
                power_db: -1.0,
            },
            Tap {
                delay_ns: 100.0,
                power_db: -7.0,
            },
        ];
        Self {
            tx_power_dbm: 40.0,
            noise_sigma: 0.05,
            taps: (0..3)
                .map(|class| ClassTaps {
                    class,
                    taps: two_tap.clone(),
                })
                .collect(),
        }
    }
}

impl LinkBudget {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0) {
            return Err(ChannelError::Params(format!("noise_sigma {}", self.noise_sigma)));
        }
        for ct in &self.taps {
            if ct.taps.is_empty() {
                return Err(ChannelError::Params(format!("class {} has no taps", ct.class)));
            }
            let total: f64 = ct.taps.iter().map(|t| 10f64.powf(t.power_db / 10.0)).sum();
            if total > 1.0 + 1e-12 {
                return Err(ChannelError::Params(format!(
                    "class {} tap powers sum to {:.4} dB > 0 dB",
                    ct.class,
                    10.0 * total.log10()
                )));
            }
        }
        Ok(())
    }

    pub fn taps_for(&self, class: u32) -> Result<&[Tap]> {
        self.taps
            .iter()
            .find(|t| t.class == class)
            .map(|t| t.taps.as_slice())
            .ok_or(ChannelError::MissingTaps(class))
    }

    /// Linear field amplitude of the deterministic link budget at one cell
    /// (tensor values for that cell, raw units).
    pub fn los_amplitude(&self, cell: &[f64]) -> f64 {
        let db = self.tx_power_dbm - cell[CH_FSPL] + cell[CH_GAIN] - cell[CH_RAIN];
        10f64.powf(db / 20.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsiTensor {
    pub n_x: usize,
    pub n_y: usize,
    pub n_c: usize,
    /// `(x, y, subcarrier)` row-major.
    pub values: Vec<Complex64>,
    pub slot: u64,
    pub freqs: Vec<f64>,
}

impl CsiTensor {
    pub fn get(&self, i: usize, j: usize, k: usize) -> Complex64 {
        self.values[(i * self.n_y + j) * self.n_c + k]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsiOptions {
    /// Subcarrier frequencies as offsets from the carrier, Hz.
    pub freqs: Vec<f64>,
    /// Divides every amplitude (the dataset-wide median LoS amplitude).
    pub amplitude_scale: f64,
    /// Drop the diffuse and scintillation terms.
    pub los_only: bool,
}

/// `H_k = a·[√(K/(K+1))·e^{jφ_k} + √(1/(K+1))·Σ_l √(p_l/P)·g_l·e^{−j2π f_k τ_l}]`
/// with `a` the link-budget amplitude perturbed by log-normal
/// scintillation, `φ_k = −2π f_k D/c` and `g_l ~ CN(0, 1)`.
pub fn synthesize_csi<R: Rng + ?Sized>(
    pt: &PhysicsTensor,
    budget: &LinkBudget,
    classes: &ClassTable,
    opts: &CsiOptions,
    rng: &mut R,
) -> Result<CsiTensor> {
    if opts.freqs.is_empty() {
        return Err(ChannelError::Params("at least one subcarrier required".into()));
    }
    if !(opts.amplitude_scale > 0.0) {
        return Err(ChannelError::Params(format!(
            "amplitude scale {}",
            opts.amplitude_scale
        )));
    }
    let cells = pt.n_x * pt.n_y;
    if pt.slant_range_km.len() != cells {
        return Err(ChannelError::Shape("physics tensor lacks slant ranges".into()));
    }
    let n_c = opts.freqs.len();
    let mut values = Vec::with_capacity(cells * n_c);
    for idx in 0..cells {
        let cell = &pt.values[idx * N_PHYS..(idx + 1) * N_PHYS];
        let class = classes.get(cell[CH_LAND] as u32)?;
        let taps = budget.taps_for(class.code)?;
        let mut a = budget.los_amplitude(cell) / opts.amplitude_scale;
        let d_m = pt.slant_range_km[idx] * 1000.0;
        if opts.los_only {
            for &f in &opts.freqs {
                values.push(Complex64::from_polar(a, -std::f64::consts::TAU * f * d_m / C_LIGHT));
            }
            continue;
        }
        let s: f64 = StandardNormal.sample(rng);
        a *= 10f64.powf(s * cell[CH_SCINT] / 20.0);
        let k = class.k_linear();
        let (w_los, w_diff) = ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt());
        let total: f64 = taps.iter().map(|t| 10f64.powf(t.power_db / 10.0)).sum();
        let gains: Vec<Complex64> = taps
            .iter()
            .map(|t| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                let w = (10f64.powf(t.power_db / 10.0) / total).sqrt();
                Complex64::new(re, im) * (w / std::f64::consts::SQRT_2)
            })
            .collect();
        for &f in &opts.freqs {
            let los = Complex64::from_polar(w_los, -std::f64::consts::TAU * f * d_m / C_LIGHT);
            let diffuse: Complex64 = taps
                .iter()
                .zip(&gains)
                .map(|(t, g)| g * Complex64::from_polar(1.0, -std::f64::consts::TAU * f * t.delay_ns * 1e-9))
                .sum();
            values.push((los + diffuse * w_diff) * a);
        }
    }
    Ok(CsiTensor {
        n_x: pt.n_x,
        n_y: pt.n_y,
        n_c,
        values,
        slot: pt.slot,
        freqs: opts.freqs.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotPattern {
    UniformRandom,
    Lattice,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotSpec {
    pub density: f64,
    pub pattern: PilotPattern,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PilotMask {
    /// `(x, y, subcarrier)` row-major.
    pub values: Vec<bool>,
    pub density: f64,
    pub pattern: PilotPattern,
}

impl PilotMask {
    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&m| m).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseObservation {
    pub n_x: usize,
    pub n_y: usize,
    pub n_c: usize,
    /// Zero outside the mask.
    pub values: Vec<Complex64>,
    pub mask: PilotMask,
    pub noise_sigma: f64,
    pub source_slot: u64,
}

fn draw_mask<R: Rng + ?Sized>(n_x: usize, n_y: usize, n_c: usize, spec: &PilotSpec, rng: &mut R) -> Vec<bool> {
    match spec.pattern {
        PilotPattern::UniformRandom => (0..n_x * n_y * n_c)
            .map(|_| rng.random::<f64>() < spec.density)
            .collect(),
        PilotPattern::Lattice => {
            let s = ((1.0 / spec.density.sqrt()).round() as usize).max(1);
            let (ox, oy) = (rng.random_range(0..s), rng.random_range(0..s));
            let mut m = Vec::with_capacity(n_x * n_y * n_c);
            for i in 0..n_x {
                for j in 0..n_y {
                    let on = i % s == ox && j % s == oy;
                    m.extend(std::iter::repeat_n(on, n_c));
                }
            }
            m
        }
    }
}

/// `Y = M ⊙ (H + N)` with circular Gaussian `N` of per-component σ.
pub fn sample_pilots<R: Rng + ?Sized>(
    csi: &CsiTensor,
    spec: &PilotSpec,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<SparseObservation> {
    if !(spec.density > 0.0 && spec.density <= 1.0) {
        return Err(ChannelError::Params(format!(
            "pilot density {} outside (0, 1]",
            spec.density
        )));
    }
    let mask = draw_mask(csi.n_x, csi.n_y, csi.n_c, spec, rng);
    let values = csi
        .values
        .iter()
        .zip(&mask)
        .map(|(h, &m)| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            if m {
                h + Complex64::new(re, im) * noise_sigma
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    Ok(SparseObservation {
        n_x: csi.n_x,
        n_y: csi.n_y,
        n_c: csi.n_c,
        values,
        mask: PilotMask {
            values: mask,
            density: spec.density,
            pattern: spec.pattern,
        },
        noise_sigma,
        source_slot: csi.slot,
    })
}

pub const N_COND: usize = 9;

/// Condition tensor for subcarrier `k`, channel-major `(9, n_x, n_y)`:
/// `[Re Y, Im Y, P1..P6 (normalized), M]`. `physics` is the normalized
/// `(x, y, 6)` array.
pub fn make_condition(obs: &SparseObservation, physics: &[f64], k: usize) -> Result<Vec<f64>> {
    let cells = obs.n_x * obs.n_y;
    if physics.len() != cells * N_PHYS {
        return Err(ChannelError::Shape(format!(
            "physics has {} values, grid needs {}",
            physics.len(),
            cells * N_PHYS
        )));
    }
    if k >= obs.n_c {
        return Err(ChannelError::Shape(format!("subcarrier {k} of {}", obs.n_c)));
    }
    let mut out = vec![0.0; N_COND * cells];
    for idx in 0..cells {
        let y = obs.values[idx * obs.n_c + k];
        out[idx] = y.re;
        out[cells + idx] = y.im;
        for c in 0..N_PHYS {
            out[(2 + c) * cells + idx] = physics[idx * N_PHYS + c];
        }
        out[8 * cells + idx] = if obs.mask.values[idx * obs.n_c + k] { 1.0 } else { 0.0 };
    }
    Ok(out)
}

/// Target tensor for subcarrier `k`, channel-major `(2, n_x, n_y)`.
pub fn make_target(csi: &CsiTensor, k: usize) -> Vec<f64> {
    let cells = csi.n_x * csi.n_y;
    let mut out = vec![0.0; 2 * cells];
    for idx in 0..cells {
        let h = csi.values[idx * csi.n_c + k];
        out[idx] = h.re;
        out[cells + idx] = h.im;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn csi(n: usize, v: Complex64) -> CsiTensor {
        CsiTensor {
            n_x: n,
            n_y: n,
            n_c: 1,
            values: vec![v; n * n],
            slot: 0,
            freqs: vec![0.0],
        }
    }

    #[test]
    fn full_mask_no_noise_is_exact() {
        let h = csi(4, Complex64::new(0.3, -1.2));
        let spec = PilotSpec {
            density: 1.0,
            pattern: PilotPattern::UniformRandom,
        };
        let obs = sample_pilots(&h, &spec, 0.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(obs.values, h.values);
    }

    #[test]
    fn sparse_popcount_within_binomial_bounds() {
        let h = csi(64, Complex64::new(1.0, 0.0));
        let spec = PilotSpec {
            density: 0.05,
            pattern: PilotPattern::UniformRandom,
        };
        for seed in 0..20 {
            let obs = sample_pilots(&h, &spec, 0.1, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let n = obs.mask.count();
            assert!((154..=256).contains(&n), "{n}");
            for (v, m) in obs.values.iter().zip(&obs.mask.values) {
                if !m {
                    assert_eq!(*v, Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn condition_has_nine_channels_in_order() {
        let h = csi(3, Complex64::new(0.0, 0.0));
        let spec = PilotSpec {
            density: 1.0,
            pattern: PilotPattern::Lattice,
        };
        let obs = sample_pilots(&h, &spec, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let phys: Vec<f64> = (0..9 * N_PHYS).map(|v| v as f64).collect();
        let c = make_condition(&obs, &phys, 0).unwrap();
        assert_eq!(c.len(), N_COND * 9);
        assert!(c[..18].iter().all(|v| *v == 0.0));
        assert!(c[72..].iter().all(|v| *v == 1.0));
        // cell 1, physics channel 3
        assert_eq!(c[(2 + 3) * 9 + 1], (N_PHYS + 3) as f64);
    }
}
