//! On-disk channel datasets: per-sample f64 blobs plus a JSON manifest.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    make_condition, make_target, sample_pilots, synthesize_csi, ChannelError, CsiOptions, LinkBudget, PilotSpec,
    Result, N_COND,
};
use crate::geo_data::ClassTable;
use crate::orbital::{geodetic_to_ecef, EphemerisSource};
use crate::physics_tensor::{
    build_physics_tensor, dominant_satellite, GridSpec, Normalization, PhysicsParams, PhysicsTensor, Rasters, N_PHYS,
};
use crate::seeds::component_seed;

pub const BLOB_LAYOUT: &str =
    "little-endian f64: target (n_c, 2 [re, im], n_x, n_y) then condition (n_c, 9 [re Y, im Y, P1..P6, mask], n_x, n_y)";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelDatasetConfig {
    pub n_slots: usize,
    /// Slot spacing, s.
    pub dt: f64,
    /// Simulation time of slot 0, s.
    pub start_t: f64,
    /// Observation delay, s.
    pub tau: f64,
    pub n_c: usize,
    pub subcarrier_spacing: f64,
    pub pilots: PilotSpec,
    pub train_fraction: f64,
    pub los_only: bool,
}

impl Default for ChannelDatasetConfig {
    fn default() -> Self {
        Self {
            n_slots: 2000,
            dt: 0.1,
            start_t: 0.0,
            tau: 0.3,
            n_c: 1,
            subcarrier_spacing: 120e3,
            pilots: PilotSpec {
                density: 0.05,
                pattern: super::PilotPattern::UniformRandom,
            },
            train_fraction: 0.8,
            los_only: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRange {
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub file: String,
    pub slot: u64,
    pub source_slot: u64,
    pub sat_id: u32,
    pub split: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelManifest {
    pub schema_version: u32,
    pub grid: GridSpec,
    pub n_c: usize,
    pub subcarrier_freqs: Vec<f64>,
    pub dt: f64,
    pub tau: f64,
    pub delay_slots: usize,
    pub amplitude_scale: f64,
    pub normalization: Normalization,
    pub pilots: PilotSpec,
    pub noise_sigma: f64,
    pub seed: u64,
    pub csi_seed: u64,
    pub pilot_seed: u64,
    pub train: SplitRange,
    pub test: SplitRange,
    pub blob_layout: String,
    pub flagged_slots: Vec<u64>,
    pub samples: Vec<SampleEntry>,
}

/// `⌈τ/Δt⌉`, tolerant of representation error in the quotient.
pub fn delay_slots(tau: f64, dt: f64) -> Result<usize> {
    if !(tau >= 0.0) {
        return Err(ChannelError::Params(format!("negative delay τ = {tau}")));
    }
    if !(dt > 0.0) {
        return Err(ChannelError::Params(format!("slot spacing {dt}")));
    }
    Ok((tau / dt - 1e-9).ceil().max(0.0) as usize)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn slot_rng(seed: u64, slot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(slot);
    rng
}

pub struct ChannelInputs<'a> {
    pub grid: &'a GridSpec,
    pub source: &'a dyn EphemerisSource,
    pub rasters: Rasters<'a>,
    pub classes: &'a ClassTable,
    pub physics: &'a PhysicsParams,
    pub budget: &'a LinkBudget,
}

/// Builds the physics prior of every slot with the dominant satellite.
pub fn physics_series(inputs: &ChannelInputs<'_>, cfg: &ChannelDatasetConfig) -> Result<Vec<PhysicsTensor>> {
    let centroid = geodetic_to_ecef(&inputs.grid.centroid());
    let mut out = Vec::with_capacity(cfg.n_slots);
    for n in 0..cfg.n_slots {
        let t = cfg.start_t + n as f64 * cfg.dt;
        let states = inputs.source.states_at(t)?;
        let (best, _) = dominant_satellite(&states, &centroid)?
            .ok_or_else(|| ChannelError::Dataset(format!("no satellites at t = {t}")))?;
        out.push(build_physics_tensor(
            inputs.grid,
            &states[best],
            n as u64,
            &inputs.rasters,
            inputs.classes,
            inputs.physics,
        )?);
    }
    Ok(out)
}

pub fn generate_channel_dataset(
    inputs: &ChannelInputs<'_>,
    cfg: &ChannelDatasetConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<ChannelManifest> {
    inputs.budget.validate()?;
    if cfg.n_c == 0 {
        return Err(ChannelError::Params("n_c must be ≥ 1".into()));
    }
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(ChannelError::Params(format!("train fraction {}", cfg.train_fraction)));
    }
    let d = delay_slots(cfg.tau, cfg.dt)?;
    if d >= cfg.n_slots {
        return Err(ChannelError::Dataset(format!(
            "delay of {d} slots leaves no sample in {} slots",
            cfg.n_slots
        )));
    }
    let physics = physics_series(inputs, cfg)?;
    let amplitude_scale = median(
        physics
            .iter()
            .flat_map(|pt| pt.values.chunks(N_PHYS).map(|c| inputs.budget.los_amplitude(c)))
            .collect(),
    );
    let freqs: Vec<f64> = (0..cfg.n_c).map(|k| k as f64 * cfg.subcarrier_spacing).collect();
    let opts = CsiOptions {
        freqs: freqs.clone(),
        amplitude_scale,
        los_only: cfg.los_only,
    };
    let csi_seed = component_seed(seed, "channel.csi");
    let pilot_seed = component_seed(seed, "channel.pilots");

    let n_samples = cfg.n_slots - d;
    let n_train = ((n_samples as f64) * cfg.train_fraction).floor() as usize;
    if n_train == 0 || n_train == n_samples {
        return Err(ChannelError::Dataset(format!(
            "split of {n_samples} samples leaves an empty side"
        )));
    }
    let normalization = Normalization::fit(physics[d..d + n_train].iter());

    let csi: Vec<_> = physics
        .iter()
        .map(|pt| {
            synthesize_csi(
                pt,
                inputs.budget,
                inputs.classes,
                &opts,
                &mut slot_rng(csi_seed, pt.slot),
            )
        })
        .collect::<Result<_>>()?;
    let obs: Vec<_> = csi
        .iter()
        .map(|h| {
            sample_pilots(
                h,
                &cfg.pilots,
                inputs.budget.noise_sigma,
                &mut slot_rng(pilot_seed, h.slot),
            )
        })
        .collect::<Result<_>>()?;

    for split in ["train", "test"] {
        let dir = out_dir.join(split);
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir_all(&dir)?;
    }
    let mut samples = Vec::with_capacity(n_samples);
    for s in 0..n_samples {
        let n = s + d;
        let split = if s < n_train { "train" } else { "test" };
        let file = format!("{split}/sample_{n:06}.bin");
        let phys = normalization.apply(&physics[n]);
        let mut blob = Vec::with_capacity(cfg.n_c * (2 + N_COND) * inputs.grid.cells());
        for k in 0..cfg.n_c {
            blob.extend(make_target(&csi[n], k));
        }
        for k in 0..cfg.n_c {
            blob.extend(make_condition(&obs[n - d], &phys, k)?);
        }
        let bytes: Vec<u8> = blob.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(out_dir.join(&file), bytes)?;
        samples.push(SampleEntry {
            file,
            slot: n as u64,
            source_slot: (n - d) as u64,
            sat_id: physics[n].sat_id,
            split: split.into(),
        });
    }
    let manifest = ChannelManifest {
        schema_version: 1,
        grid: inputs.grid.clone(),
        n_c: cfg.n_c,
        subcarrier_freqs: freqs,
        dt: cfg.dt,
        tau: cfg.tau,
        delay_slots: d,
        amplitude_scale,
        normalization,
        pilots: cfg.pilots,
        noise_sigma: inputs.budget.noise_sigma,
        seed,
        csi_seed,
        pilot_seed,
        train: SplitRange { start: 0, end: n_train },
        test: SplitRange {
            start: n_train,
            end: n_samples,
        },
        blob_layout: BLOB_LAYOUT.into(),
        flagged_slots: physics.iter().filter(|p| p.flagged).map(|p| p.slot).collect(),
        samples,
    };
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

#[derive(Clone, Debug)]
pub struct ChannelSample {
    pub slot: u64,
    pub n_c: usize,
    pub cells: usize,
    /// `(n_c, 2, n_x, n_y)`
    pub target: Vec<f64>,
    /// `(n_c, 9, n_x, n_y)`
    pub condition: Vec<f64>,
}

impl ChannelSample {
    pub fn target_slice(&self, k: usize) -> &[f64] {
        &self.target[k * 2 * self.cells..(k + 1) * 2 * self.cells]
    }

    pub fn condition_slice(&self, k: usize) -> &[f64] {
        &self.condition[k * N_COND * self.cells..(k + 1) * N_COND * self.cells]
    }
}

#[derive(Clone, Debug)]
pub struct ChannelDataset {
    pub manifest: ChannelManifest,
    pub train: Vec<ChannelSample>,
    pub test: Vec<ChannelSample>,
}

pub fn load_channel_dataset(dir: &Path) -> Result<ChannelDataset> {
    let manifest: ChannelManifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let cells = manifest.grid.cells();
    let n_c = manifest.n_c;
    let expect = n_c * (2 + N_COND) * cells;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for e in &manifest.samples {
        let bytes = fs::read(dir.join(&e.file))?;
        if bytes.len() != expect * 8 {
            return Err(ChannelError::Dataset(format!(
                "{}: {} bytes, expected {}",
                e.file,
                bytes.len(),
                expect * 8
            )));
        }
        let v: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let split_at = n_c * 2 * cells;
        let sample = ChannelSample {
            slot: e.slot,
            n_c,
            cells,
            target: v[..split_at].to_vec(),
            condition: v[split_at..].to_vec(),
        };
        match e.split.as_str() {
            "train" => train.push(sample),
            "test" => test.push(sample),
            other => return Err(ChannelError::Dataset(format!("unknown split {other:?}"))),
        }
    }
    if train.len() != manifest.train.end - manifest.train.start || test.len() != manifest.test.end - manifest.test.start
    {
        return Err(ChannelError::Dataset("sample counts disagree with split ranges".into()));
    }
    Ok(ChannelDataset { manifest, train, test })
}
