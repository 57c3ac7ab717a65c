//! Run configuration: one JSON document per experiment, resolved against the
//! directory that contains it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use leo_twin::channel_dt::{ChannelDtConfig, EvalConfig, LossConfig, PgResUnetConfig, ScheduleConfig, TrainConfig};
use leo_twin::channel_sim::{ChannelDatasetConfig, LinkBudget};
use leo_twin::physics_tensor::{GridSpec, PhysicsParams};
use leo_twin::scenario::{ToyChannelConfig, ToyTrafficConfig};
use leo_twin::traffic_dt::{StGnnConfig, TrafficDatasetConfig, TrafficDtConfig, TrafficTrainConfig};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const RESOLVED_CONFIG: &str = "config.json";

/// Built-in synthetic inputs that replace the orbital, grid and raster sections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    ToyChannel(ToyChannelConfig),
    ToyTraffic(ToyTrafficConfig),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitalConfig {
    /// Element sets propagated with the Kepler/J2 model.
    pub tle: Option<PathBuf>,
    /// Pre-computed ephemeris CSV, used instead of `tle`.
    pub ephemeris: Option<PathBuf>,
    /// Unix seconds of simulation time zero; defaults to the earliest element-set epoch.
    pub sim_epoch: Option<f64>,
    pub j2: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RasterPaths {
    pub land_cover: Option<PathBuf>,
    pub rain: Option<PathBuf>,
    pub population: Option<PathBuf>,
    /// JSON land-cover class table; the built-in table when absent.
    pub classes: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub dataset: ChannelDatasetConfig,
    pub physics: PhysicsParams,
    pub budget: LinkBudget,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionSection {
    pub schedule: ScheduleConfig,
    pub unet: PgResUnetConfig,
    pub loss: LossConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficSection {
    pub dataset: TrafficDatasetConfig,
    pub model: StGnnConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub channel: TrainConfig,
    pub traffic: TrafficTrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficEvalConfig {
    /// Windows per forward pass.
    pub batch: usize,
}

impl Default for TrafficEvalConfig {
    fn default() -> Self {
        Self { batch: 64 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub channel: EvalConfig,
    pub traffic: TrafficEvalConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub scenario: Option<Scenario>,
    #[serde(default)]
    pub orbital: OrbitalConfig,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub rasters: RasterPaths,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub diffusion: DiffusionSection,
    #[serde(default)]
    pub traffic: TrafficSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
}

fn absolute(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn new(seed: u64, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed,
            output_dir: output_dir.into(),
            scenario: None,
            orbital: OrbitalConfig::default(),
            grid: None,
            rasters: RasterPaths::default(),
            channel: ChannelSection::default(),
            diffusion: DiffusionSection::default(),
            traffic: TrafficSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
        }
    }

    /// Parses `text`, makes relative paths absolute against `base` and
    /// propagates the global seed into the training sections.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(CliError::ConfigSyntax)?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        absolute(base, &mut cfg.output_dir);
        for p in [
            &mut cfg.orbital.tle,
            &mut cfg.orbital.ephemeris,
            &mut cfg.rasters.land_cover,
            &mut cfg.rasters.rain,
            &mut cfg.rasters.population,
            &mut cfg.rasters.classes,
        ]
        .into_iter()
        .flatten()
        {
            absolute(base, p);
        }
        cfg.train.channel.seed = cfg.seed;
        cfg.train.traffic.seed = cfg.seed;
        cfg.channel_dt()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        cfg.traffic_dt()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        cfg.traffic
            .dataset
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        cfg.channel
            .budget
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(g) = &cfg.grid {
            g.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::MissingInput {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let base = if base.as_os_str().is_empty() {
            std::env::current_dir()?
        } else {
            base
        };
        Self::parse(&text, &base)
    }

    /// Writes the resolved configuration into the output directory.
    pub fn write_resolved(&self) -> Result<PathBuf> {
        fs::create_dir_all(&self.output_dir)?;
        let path = self.output_dir.join(RESOLVED_CONFIG);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }

    pub fn channel_dt(&self) -> ChannelDtConfig {
        ChannelDtConfig {
            schedule: self.diffusion.schedule.clone(),
            unet: self.diffusion.unet.clone(),
            loss: self.diffusion.loss.clone(),
            train: self.train.channel.clone(),
            eval: self.eval.channel.clone(),
        }
    }

    pub fn traffic_dt(&self) -> TrafficDtConfig {
        TrafficDtConfig {
            model: self.traffic.model.clone(),
            train: self.train.traffic.clone(),
        }
    }

    pub fn channel_dir(&self) -> PathBuf {
        self.output_dir.join("channel")
    }

    pub fn traffic_dir(&self) -> PathBuf {
        self.output_dir.join("traffic")
    }
}
