//! Subcommand implementations. Each returns the one-line stdout summary.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use leo_twin::channel_dt::{
    evaluate_baseline, evaluate_channel, load_channel_model, train_channel_model_from, write_channel_metrics,
    NoiseSchedule, PgResUnet,
};
use leo_twin::channel_sim::{generate_channel_dataset, load_channel_dataset, ChannelDataset, ChannelInputs};
use leo_twin::geo_data::{load_raster, ClassTable, RasterGrid};
use leo_twin::orbital::{
    parse_tle, read_ephemeris, write_ephemeris, EphemerisSource, KeplerPropagator, PropagatedSource, Propagator,
    TabulatedSource, TleRecord,
};
use leo_twin::physics_tensor::{GridSpec, Rasters};
use leo_twin::scenario::{toy_channel_scenario, toy_traffic_scenario};
use leo_twin::seeds::component_seed;
use leo_twin::traffic_dt::{
    evaluate_traffic, generate_traffic_dataset, load_traffic_dataset, load_traffic_model, train_traffic_model_from,
    write_traffic_metrics, StGnn, TrafficDataset, TrafficInputs,
};
use leo_twin_tensor::ParamStore;

use crate::config::{RunConfig, Scenario};
use crate::error::{from_channel_dt, from_generation_channel, from_generation_traffic, from_traffic, CliError, Result};

pub const CHANNEL_CHECKPOINT: &str = "channel_model.ckpt";
pub const TRAFFIC_CHECKPOINT: &str = "traffic_model.ckpt";
pub const METRICS_FILE: &str = "metrics.csv";

fn require(path: &Path) -> Result<()> {
    match fs::metadata(path) {
        Ok(_) => Ok(()),
        Err(source) => Err(CliError::MissingInput {
            path: path.to_path_buf(),
            source,
        }),
    }
}

fn read_tles(path: &Path) -> Result<Vec<TleRecord>> {
    require(path)?;
    let text = fs::read_to_string(path)?;
    parse_tle(&text).map_err(|e| CliError::parse(path, e))
}

fn read_raster(path: &Option<PathBuf>, what: &str) -> Result<RasterGrid> {
    let path = path
        .as_ref()
        .ok_or_else(|| CliError::Config(format!("rasters.{what} is required")))?;
    require(path)?;
    load_raster(path).map_err(|e| CliError::parse(path, e))
}

/// Unix seconds from an RFC 3339 timestamp or a plain number.
pub fn parse_start(s: &str) -> Result<f64> {
    if let Ok(v) = s.parse::<f64>() {
        return Ok(v);
    }
    let t = chrono::DateTime::parse_from_rfc3339(s).map_err(|e| CliError::Config(format!("--start {s:?}: {e}")))?;
    Ok(t.timestamp() as f64 + f64::from(t.timestamp_subsec_nanos()) * 1e-9)
}

/// Sample times `0, dt, …` up to and including `duration`; none for a zero duration.
pub fn sample_times(duration: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !(duration >= 0.0) || !duration.is_finite() {
        return Err(CliError::Config(format!("duration {duration} s and dt {dt} s")));
    }
    if duration == 0.0 {
        return Ok(Vec::new());
    }
    let n = (duration / dt + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| i as f64 * dt).collect())
}

pub fn ephemeris_file(dir: &Path, sat_id: u32) -> PathBuf {
    dir.join(format!("sat_{sat_id:05}.csv"))
}

/// Writes one ephemeris CSV per satellite into `out`.
pub fn propagate(tle: &Path, start: &str, duration: f64, dt: f64, j2: bool, out: &Path) -> Result<String> {
    let tles = read_tles(tle)?;
    let epoch = parse_start(start)?;
    let times = sample_times(duration, dt)?;
    let mut ids: Vec<u32> = tles.iter().map(|t| t.sat_id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::parse(tle, "duplicate satellite catalogue number"));
    }
    fs::create_dir_all(out)?;
    let prop = KeplerPropagator::new(epoch, j2);
    for rec in &tles {
        let rows = times
            .iter()
            .map(|&t| prop.state(rec, t))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        write_ephemeris(&rows, &ephemeris_file(out, rec.sat_id))?;
    }
    Ok(format!(
        "propagated {} satellites x {} samples into {}",
        tles.len(),
        times.len(),
        out.display()
    ))
}

/// Orbit, grid and raster inputs, from a built-in scenario or from files.
struct Inputs {
    tles: Vec<TleRecord>,
    tabulated: Option<TabulatedSource>,
    sim_epoch: f64,
    j2: bool,
    grid: Option<GridSpec>,
    land: Option<RasterGrid>,
    rain: Option<RasterGrid>,
    pop: Option<RasterGrid>,
    classes: ClassTable,
}

impl Inputs {
    fn load(cfg: &RunConfig) -> Result<Self> {
        let classes = match &cfg.rasters.classes {
            Some(p) => {
                require(p)?;
                let t: ClassTable = serde_json::from_str(&fs::read_to_string(p)?).map_err(|e| CliError::parse(p, e))?;
                t.validate().map_err(|e| CliError::parse(p, e))?;
                t
            }
            None => ClassTable::default(),
        };
        match &cfg.scenario {
            Some(Scenario::ToyChannel(toy)) => {
                let s = toy_channel_scenario(toy)?;
                return Ok(Self {
                    tles: s.tles,
                    tabulated: None,
                    sim_epoch: s.sim_epoch,
                    j2: false,
                    grid: Some(s.grid),
                    land: Some(s.land),
                    rain: Some(s.rain),
                    pop: None,
                    classes,
                });
            }
            Some(Scenario::ToyTraffic(toy)) => {
                let s = toy_traffic_scenario(toy)?;
                return Ok(Self {
                    tles: s.tles,
                    tabulated: None,
                    sim_epoch: s.sim_epoch,
                    j2: false,
                    grid: None,
                    land: Some(s.land),
                    rain: None,
                    pop: Some(s.pop),
                    classes,
                });
            }
            None => {}
        }
        let o = &cfg.orbital;
        let (tles, tabulated) = match (&o.tle, &o.ephemeris) {
            (_, Some(p)) => {
                require(p)?;
                let rows = read_ephemeris(p).map_err(|e| CliError::parse(p, e))?;
                (Vec::new(), Some(TabulatedSource::new(rows)))
            }
            (Some(p), None) => (read_tles(p)?, None),
            (None, None) => {
                return Err(CliError::Config(
                    "set scenario, orbital.tle or orbital.ephemeris".into(),
                ))
            }
        };
        let sim_epoch = o
            .sim_epoch
            .or_else(|| tles.iter().map(|t| t.epoch).reduce(f64::min))
            .unwrap_or(0.0);
        let opt = |p: &Option<PathBuf>, what: &str| p.as_ref().map(|_| read_raster(p, what)).transpose();
        Ok(Self {
            tles,
            tabulated,
            sim_epoch,
            j2: o.j2,
            grid: cfg.grid.clone(),
            land: opt(&cfg.rasters.land_cover, "land_cover")?,
            rain: opt(&cfg.rasters.rain, "rain")?,
            pop: opt(&cfg.rasters.population, "population")?,
            classes,
        })
    }

    fn with_source<T>(&self, f: impl FnOnce(&dyn EphemerisSource) -> T) -> T {
        match &self.tabulated {
            Some(t) => f(t),
            None => f(&PropagatedSource {
                tles: &self.tles,
                propagator: KeplerPropagator::new(self.sim_epoch, self.j2),
            }),
        }
    }
}

fn missing(what: &str) -> CliError {
    CliError::Config(format!("{what} is required for this subcommand"))
}

pub fn gen_channel(cfg: &RunConfig) -> Result<String> {
    cfg.write_resolved()?;
    let inputs = Inputs::load(cfg)?;
    let grid = inputs.grid.as_ref().ok_or_else(|| missing("grid"))?;
    let land = inputs.land.as_ref().ok_or_else(|| missing("rasters.land_cover"))?;
    let rain = inputs.rain.as_ref().ok_or_else(|| missing("rasters.rain"))?;
    let dir = cfg.channel_dir().join("data");
    let manifest = inputs.with_source(|source| {
        let ci = ChannelInputs {
            grid,
            source,
            rasters: Rasters { land, rain },
            classes: &inputs.classes,
            physics: &cfg.channel.physics,
            budget: &cfg.channel.budget,
        };
        generate_channel_dataset(&ci, &cfg.channel.dataset, cfg.seed, &dir)
    });
    let manifest = manifest.map_err(from_generation_channel)?;
    let train = manifest.samples.iter().filter(|s| s.split == "train").count();
    Ok(format!(
        "gen-channel: {} samples ({train} train, {} test) in {}",
        manifest.samples.len(),
        manifest.samples.len() - train,
        dir.display()
    ))
}

pub fn gen_traffic(cfg: &RunConfig) -> Result<String> {
    cfg.write_resolved()?;
    let inputs = Inputs::load(cfg)?;
    let pop = inputs.pop.as_ref().ok_or_else(|| missing("rasters.population"))?;
    let land = inputs.land.as_ref().ok_or_else(|| missing("rasters.land_cover"))?;
    let dir = cfg.traffic_dir().join("data");
    let manifest = inputs.with_source(|source| {
        let ti = TrafficInputs {
            source,
            pop,
            land,
            classes: &inputs.classes,
        };
        generate_traffic_dataset(&ti, &cfg.traffic.dataset, cfg.seed, &dir)
    });
    let manifest = manifest.map_err(from_generation_traffic)?;
    Ok(format!(
        "gen-traffic: {} slots x {} satellites x {} beams in {}",
        cfg.traffic.dataset.n_slots,
        manifest.sat_ids.len(),
        manifest.n_beams,
        dir.display()
    ))
}

fn channel_dataset(cfg: &RunConfig) -> Result<ChannelDataset> {
    let dir = cfg.channel_dir().join("data");
    require(&dir.join("manifest.json"))?;
    load_channel_dataset(&dir).map_err(|e| CliError::Failure(Box::new(e)))
}

fn traffic_dataset(cfg: &RunConfig) -> Result<TrafficDataset> {
    let dir = cfg.traffic_dir().join("data");
    require(&dir.join("manifest.json"))?;
    load_traffic_dataset(&dir).map_err(|e| CliError::Failure(Box::new(e)))
}

fn init_checkpoint(path: Option<&Path>) -> Result<Option<&Path>> {
    if let Some(p) = path {
        require(p)?;
    }
    Ok(path)
}

pub fn train_channel(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<String> {
    cfg.write_resolved()?;
    let ds = channel_dataset(cfg)?;
    let init = init_checkpoint(checkpoint)?;
    let report = train_channel_model_from(&ds, &cfg.channel_dt(), &cfg.channel_dir().join("run"), init)
        .map_err(from_channel_dt)?;
    let last = report.losses.last().expect("epoch-0 loss is always recorded");
    Ok(format!(
        "train-channel: {} epochs, val loss {:.6} -> {}",
        last.epoch,
        last.val_loss,
        report.checkpoint.display()
    ))
}

pub fn train_traffic(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<String> {
    cfg.write_resolved()?;
    let ds = traffic_dataset(cfg)?;
    let init = init_checkpoint(checkpoint)?;
    let report =
        train_traffic_model_from(&ds, &cfg.traffic_dt(), &cfg.traffic_dir().join("run"), init).map_err(from_traffic)?;
    let last = report.losses.last().expect("epoch-0 loss is always recorded");
    Ok(format!(
        "train-traffic: {} epochs, val loss {:.6} -> {}",
        last.epoch,
        last.val_loss,
        report.checkpoint.display()
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Task {
    Channel,
    Traffic,
}

/// Which parameters to score.
#[derive(Clone, Debug)]
pub enum ModelSource {
    /// The checkpoint written by the training subcommand.
    Trained,
    Checkpoint(PathBuf),
    /// Freshly initialized from the run seed.
    Untrained,
}

pub fn eval(cfg: &RunConfig, task: Task, source: &ModelSource) -> Result<String> {
    cfg.write_resolved()?;
    match task {
        Task::Channel => eval_channel(cfg, source),
        Task::Traffic => eval_traffic(cfg, source),
    }
}

fn checkpoint_path(default: PathBuf, source: &ModelSource) -> Result<Option<PathBuf>> {
    let path = match source {
        ModelSource::Untrained => return Ok(None),
        ModelSource::Trained => default,
        ModelSource::Checkpoint(p) => p.clone(),
    };
    require(&path)?;
    Ok(Some(path))
}

fn eval_channel(cfg: &RunConfig, source: &ModelSource) -> Result<String> {
    let ds = channel_dataset(cfg)?;
    let dt = cfg.channel_dt();
    let ckpt = checkpoint_path(cfg.channel_dir().join("run").join(CHANNEL_CHECKPOINT), source)?;
    let (model, epoch) = match &ckpt {
        Some(p) => (
            load_channel_model(p, &dt.unet).map_err(from_channel_dt)?.0,
            dt.train.epochs,
        ),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(component_seed(cfg.seed, "channel.init"));
            let model: PgResUnet =
                PgResUnet::new(&mut ParamStore::new(), dt.unet.clone(), &mut rng).map_err(from_channel_dt)?;
            (model, 0)
        }
    };
    let sched = NoiseSchedule::from_config(&dt.schedule).map_err(from_channel_dt)?;
    let hw = (ds.manifest.grid.n_x, ds.manifest.grid.n_y);
    let m = evaluate_channel(&model, &ds.test, hw, &sched, &dt.eval, cfg.seed).map_err(from_channel_dt)?;
    let b = evaluate_baseline(&ds.test, hw, dt.eval.amp_threshold).map_err(from_channel_dt)?;
    let path = cfg.channel_dir().join(METRICS_FILE);
    write_channel_metrics(
        &path,
        &[(epoch, "test", m.clone()), (epoch, "test_nearest_pilot", b.clone())],
    )
    .map_err(from_channel_dt)?;
    Ok(format!(
        "eval channel: amp_mse {:.6e} phase_mse {:.6e} (nearest pilot {:.6e} / {:.6e}) -> {}",
        m.amp_mse,
        m.phase_mse,
        b.amp_mse,
        b.phase_mse,
        path.display()
    ))
}

fn eval_traffic(cfg: &RunConfig, source: &ModelSource) -> Result<String> {
    let ds = traffic_dataset(cfg)?;
    let dt = cfg.traffic_dt();
    let n_beams = ds.manifest.n_beams;
    let ckpt = checkpoint_path(cfg.traffic_dir().join("run").join(TRAFFIC_CHECKPOINT), source)?;
    let model = match &ckpt {
        Some(p) => load_traffic_model(p, &dt.model, n_beams).map_err(from_traffic)?.0,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(component_seed(cfg.seed, "traffic.init"));
            StGnn::new(&mut ParamStore::new(), dt.model.clone(), n_beams, &mut rng).map_err(from_traffic)?
        }
    };
    let rows = evaluate_traffic(&model, &ds, cfg.eval.traffic.batch).map_err(from_traffic)?;
    let path = cfg.traffic_dir().join(METRICS_FILE);
    write_traffic_metrics(&path, &rows).map_err(from_traffic)?;
    let get = |name: &str| rows.iter().find(|r| r.model == name).map_or(f64::NAN, |r| r.mse);
    Ok(format!(
        "eval traffic: st_gnn mse {:.6} persistence {:.6} ar1_optimum {:.6} -> {}",
        get("st_gnn"),
        get("persistence"),
        get("ar1_optimum"),
        path.display()
    ))
}
