//! On-disk traffic datasets: long-format traffic CSV, sub-satellite
//! positions, per-slot graph edge lists and a JSON manifest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    build_graph, hanning_smooth, physics_baseline, quantize, read_graph, synthesize_residual, write_graph,
    BaselineMode, BeamLayout, ConstellationGraph, GraphConfig, ResidualConfig, Result, ScalerState, TrafficError,
};
use crate::channel_sim::SplitRange;
use crate::geo_data::{ClassTable, RasterGrid};
use crate::orbital::{ecef_to_geodetic, EphemerisRecord, EphemerisSource};
use crate::seeds::component_seed;

pub const TRAFFIC_HEADER: &str = "slot,sat_id,beam,total_mbps,baseline_mbps,residual_mbps";

/// Largest traffic magnitude for which quantum-grid arithmetic stays exact.
const EXACT_LIMIT: f64 = 4_294_967_296.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficDatasetConfig {
    pub n_slots: usize,
    /// Slot spacing, s.
    pub dt: f64,
    /// Simulation time of slot 0, s.
    pub start_t: f64,
    pub layout: BeamLayout,
    /// Demand per served person, Mbps.
    pub rho: f64,
    /// Demand floor added to every beam, Mbps.
    pub base_mbps: f64,
    pub mode: BaselineMode,
    /// Hanning window length in slots; `None` disables smoothing.
    pub smoothing: Option<usize>,
    pub residual: ResidualConfig,
    pub graph: GraphConfig,
    pub train_fraction: f64,
}

impl Default for TrafficDatasetConfig {
    fn default() -> Self {
        Self {
            n_slots: 2000,
            dt: 60.0,
            start_t: 0.0,
            layout: BeamLayout::default(),
            rho: 1e-6,
            base_mbps: 20.0,
            mode: BaselineMode::Integral,
            smoothing: Some(11),
            residual: ResidualConfig::default(),
            graph: GraphConfig::default(),
            train_fraction: 0.8,
        }
    }
}

impl TrafficDatasetConfig {
    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        self.residual.validate()?;
        let ok = self.n_slots >= 2
            && self.dt > 0.0
            && self.start_t.is_finite()
            && self.rho > 0.0
            && self.base_mbps >= 0.0
            && self.train_fraction > 0.0
            && self.train_fraction < 1.0;
        if !ok {
            return Err(TrafficError::Config(format!("{self:?}")));
        }
        let n_train = self.n_train();
        if n_train == 0 || n_train >= self.n_slots {
            return Err(TrafficError::Config(format!(
                "train fraction {} of {} slots leaves an empty split",
                self.train_fraction, self.n_slots
            )));
        }
        Ok(())
    }

    pub fn n_train(&self) -> usize {
        (self.n_slots as f64 * self.train_fraction).floor() as usize
    }
}

pub struct TrafficInputs<'a> {
    pub source: &'a dyn EphemerisSource,
    pub pop: &'a RasterGrid,
    pub land: &'a RasterGrid,
    pub classes: &'a ClassTable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficManifest {
    pub schema_version: u32,
    pub config: TrafficDatasetConfig,
    pub seed: u64,
    pub residual_seed: u64,
    pub quantum: f64,
    pub n_beams: usize,
    pub sat_ids: Vec<u32>,
    /// Plane id per satellite, from slot-0 clustering.
    pub planes: Vec<usize>,
    pub train: SplitRange,
    pub test: SplitRange,
    /// Beam-summed residual, fitted on training slots.
    pub input_scaler: ScalerState,
    /// Per-beam residual, fitted on training slots.
    pub target_scaler: ScalerState,
    pub traffic_file: String,
    pub positions_file: String,
    pub graph_dir: String,
}

/// Geodetic `(lat, lon)` of each sub-satellite point, deg.
pub fn slot_positions(states: &[EphemerisRecord]) -> Vec<(f64, f64)> {
    states
        .iter()
        .map(|s| {
            let g = ecef_to_geodetic(&s.position);
            (g.lat, g.lon)
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct TrafficRow {
    slot: usize,
    sat_id: u32,
    beam: usize,
    total_mbps: f64,
    baseline_mbps: f64,
    residual_mbps: f64,
}

#[derive(Serialize, Deserialize)]
struct PositionRow {
    slot: usize,
    sat_id: u32,
    lat: f64,
    lon: f64,
}

fn graph_file(slot: usize) -> String {
    format!("graphs/slot_{slot:06}.csv")
}

/// Simulates baseline, residual and graphs for every slot and writes the
/// dataset under `out_dir`, replacing any previous `graphs/` directory.
pub fn generate_traffic_dataset(
    inputs: &TrafficInputs<'_>,
    cfg: &TrafficDatasetConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<TrafficManifest> {
    cfg.validate()?;
    let n_b = cfg.layout.n_beams;
    let mut sat_ids: Vec<u32> = Vec::new();
    let mut raw = Vec::with_capacity(cfg.n_slots);
    let mut graphs = Vec::with_capacity(cfg.n_slots);
    let mut positions = Vec::with_capacity(cfg.n_slots);
    for n in 0..cfg.n_slots {
        let mut states = inputs.source.states_at(cfg.start_t + n as f64 * cfg.dt)?;
        states.sort_by_key(|s| s.sat_id);
        let ids: Vec<u32> = states.iter().map(|s| s.sat_id).collect();
        if n == 0 {
            sat_ids = ids;
        } else if ids != sat_ids {
            return Err(TrafficError::Dataset(format!("slot {n}: satellite set changed")));
        }
        raw.push(physics_baseline(
            &states,
            inputs.pop,
            inputs.land,
            inputs.classes,
            &cfg.layout,
            cfg.rho,
            cfg.mode,
        )?);
        graphs.push(build_graph(&states, n, &cfg.graph)?);
        positions.push(slot_positions(&states));
    }
    let width = sat_ids.len() * n_b;
    let mut baseline = vec![0.0; cfg.n_slots * width];
    for e in 0..width {
        let series: Vec<f64> = raw.iter().map(|r| r[e]).collect();
        let smooth = match cfg.smoothing {
            Some(w) => hanning_smooth(&series, w)?,
            None => series,
        };
        for (n, v) in smooth.into_iter().enumerate() {
            baseline[n * width + e] = quantize(cfg.base_mbps + v);
        }
    }
    let planes = graphs[0].plane.clone();
    let residual_seed = component_seed(seed, "traffic.residual");
    let residual: Vec<f64> = synthesize_residual(cfg.n_slots, &planes, n_b, &cfg.residual, residual_seed)?
        .into_iter()
        .map(quantize)
        .collect();
    let mut total = Vec::with_capacity(baseline.len());
    for (i, (p, r)) in baseline.iter().zip(&residual).enumerate() {
        let x = p + r;
        if !(x >= 0.0) || p.abs() >= EXACT_LIMIT || r.abs() >= EXACT_LIMIT {
            return Err(TrafficError::NegativeTraffic {
                slot: i / width,
                node: (i % width) / n_b,
                value: x,
            });
        }
        total.push(x);
    }

    let n_train = cfg.n_train();
    let train_res = &residual[..n_train * width];
    let summed: Vec<f64> = train_res.chunks(n_b).map(|c| c.iter().sum()).collect();
    let input_scaler = ScalerState::fit(&summed, 1)?;
    let target_scaler = ScalerState::fit(train_res, n_b)?;

    fs::create_dir_all(out_dir)?;
    let gdir = out_dir.join("graphs");
    if gdir.exists() {
        fs::remove_dir_all(&gdir)?;
    }
    fs::create_dir_all(&gdir)?;
    let mut w = csv::Writer::from_path(out_dir.join("traffic.csv"))?;
    let mut pw = csv::Writer::from_path(out_dir.join("positions.csv"))?;
    for n in 0..cfg.n_slots {
        for (i, &sat_id) in sat_ids.iter().enumerate() {
            for b in 0..n_b {
                let k = n * width + i * n_b + b;
                w.serialize(TrafficRow {
                    slot: n,
                    sat_id,
                    beam: b,
                    total_mbps: total[k],
                    baseline_mbps: baseline[k],
                    residual_mbps: residual[k],
                })?;
            }
            let (lat, lon) = positions[n][i];
            pw.serialize(PositionRow {
                slot: n,
                sat_id,
                lat,
                lon,
            })?;
        }
        write_graph(&out_dir.join(graph_file(n)), &graphs[n])?;
    }
    w.flush()?;
    pw.flush()?;

    let manifest = TrafficManifest {
        schema_version: 1,
        config: cfg.clone(),
        seed,
        residual_seed,
        quantum: super::TRAFFIC_QUANTUM,
        n_beams: n_b,
        sat_ids,
        planes,
        train: SplitRange { start: 0, end: n_train },
        test: SplitRange {
            start: n_train,
            end: cfg.n_slots,
        },
        input_scaler,
        target_scaler,
        traffic_file: "traffic.csv".into(),
        positions_file: "positions.csv".into(),
        graph_dir: "graphs".into(),
    };
    fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Slot-major arrays: traffic `(slot, sat, beam)`, positions `(slot, sat)`.
#[derive(Clone, Debug)]
pub struct TrafficDataset {
    pub manifest: TrafficManifest,
    pub n_slots: usize,
    pub total: Vec<f64>,
    pub baseline: Vec<f64>,
    pub residual: Vec<f64>,
    pub lat: Vec<f64>,
    pub lon: Vec<f64>,
    pub graphs: Vec<ConstellationGraph>,
}

impl TrafficDataset {
    pub fn n_sats(&self) -> usize {
        self.manifest.sat_ids.len()
    }

    /// Values per slot in the traffic arrays.
    pub fn width(&self) -> usize {
        self.n_sats() * self.manifest.n_beams
    }

    pub fn residual_at(&self, slot: usize) -> &[f64] {
        let w = self.width();
        &self.residual[slot * w..(slot + 1) * w]
    }
}

pub fn load_traffic_dataset(dir: &Path) -> Result<TrafficDataset> {
    let manifest: TrafficManifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    let n_slots = manifest.config.n_slots;
    let n_s = manifest.sat_ids.len();
    let n_b = manifest.n_beams;
    let width = n_s * n_b;
    let sat_index = |id: u32| {
        manifest
            .sat_ids
            .iter()
            .position(|&s| s == id)
            .ok_or_else(|| TrafficError::Dataset(format!("unknown satellite {id}")))
    };
    let mut total = vec![f64::NAN; n_slots * width];
    let mut baseline = total.clone();
    let mut residual = total.clone();
    for row in csv::Reader::from_path(dir.join(&manifest.traffic_file))?.deserialize() {
        let row: TrafficRow = row?;
        if row.slot >= n_slots || row.beam >= n_b {
            return Err(TrafficError::Dataset(format!(
                "row slot {} beam {}",
                row.slot, row.beam
            )));
        }
        let k = row.slot * width + sat_index(row.sat_id)? * n_b + row.beam;
        total[k] = row.total_mbps;
        baseline[k] = row.baseline_mbps;
        residual[k] = row.residual_mbps;
    }
    let mut lat = vec![f64::NAN; n_slots * n_s];
    let mut lon = lat.clone();
    for row in csv::Reader::from_path(dir.join(&manifest.positions_file))?.deserialize() {
        let row: PositionRow = row?;
        if row.slot >= n_slots {
            return Err(TrafficError::Dataset(format!("position row slot {}", row.slot)));
        }
        let k = row.slot * n_s + sat_index(row.sat_id)?;
        lat[k] = row.lat;
        lon[k] = row.lon;
    }
    if total.iter().chain(&lat).any(|v| v.is_nan()) {
        return Err(TrafficError::Dataset("missing traffic or position rows".into()));
    }
    let graphs = (0..n_slots)
        .map(|n| read_graph(&dir.join(graph_file(n)), n, &manifest.sat_ids, &manifest.planes))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrafficDataset {
        manifest,
        n_slots,
        total,
        baseline,
        residual,
        lat,
        lon,
        graphs,
    })
}
