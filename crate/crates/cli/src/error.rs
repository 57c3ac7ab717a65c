use std::path::PathBuf;

use thiserror::Error;

use leo_twin::channel_dt::ChannelDtError;
use leo_twin::channel_sim::ChannelError;
use leo_twin::geo_data::GeoError;
use leo_twin::orbital::OrbitalError;
use leo_twin::scenario::ScenarioError;
use leo_twin::traffic_dt::TrafficError;
use leo_twin_tensor::TensorError;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const PARSE: i32 = 2;
    pub const MISSING_INPUT: i32 = 3;
    pub const INVARIANT: i32 = 4;
    pub const DIVERGED: i32 = 5;
    pub const CHECKPOINT_MISMATCH: i32 = 6;
}

type Source = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    ConfigSyntax(#[source] serde_json::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: Source,
    },
    #[error("missing input {path}: {source}")]
    MissingInput {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("generation failed: {0}")]
    Invariant(#[source] Source),
    #[error("{0}")]
    Diverged(#[source] Source),
    #[error("checkpoint does not match the configuration: {0}")]
    CheckpointMismatch(#[source] TensorError),
    #[error("{0}")]
    Failure(#[source] Source),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigSyntax(_) | CliError::Config(_) | CliError::Parse { .. } => exit::PARSE,
            CliError::MissingInput { .. } => exit::MISSING_INPUT,
            CliError::Invariant(_) => exit::INVARIANT,
            CliError::Diverged(_) => exit::DIVERGED,
            CliError::CheckpointMismatch(_) => exit::CHECKPOINT_MISMATCH,
            CliError::Failure(_) | CliError::Io(_) | CliError::Json(_) => exit::FAILURE,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, source: impl Into<Source>) -> Self {
        CliError::Parse {
            path: path.into(),
            source: source.into(),
        }
    }
}

fn tensor(e: TensorError, fallback: fn(Source) -> CliError) -> CliError {
    match e {
        TensorError::Checkpoint(_) => CliError::CheckpointMismatch(e),
        TensorError::NonFinite { .. } => CliError::Diverged(Box::new(e)),
        other => fallback(Box::new(other)),
    }
}

/// Dataset-generation failures other than I/O are invariant violations.
pub fn from_generation_channel(e: ChannelError) -> CliError {
    match e {
        ChannelError::Io(io) => CliError::Io(io),
        other => CliError::Invariant(Box::new(other)),
    }
}

pub fn from_generation_traffic(e: TrafficError) -> CliError {
    match e {
        TrafficError::Io(io) => CliError::Io(io),
        other => CliError::Invariant(Box::new(other)),
    }
}

pub fn from_channel_dt(e: ChannelDtError) -> CliError {
    match e {
        ChannelDtError::Diverged { .. } => CliError::Diverged(Box::new(e)),
        ChannelDtError::Tensor(t) => tensor(t, CliError::Failure),
        ChannelDtError::Config(_) => CliError::Config(e.to_string()),
        other => CliError::Failure(Box::new(other)),
    }
}

pub fn from_traffic(e: TrafficError) -> CliError {
    match e {
        TrafficError::Diverged { .. } => CliError::Diverged(Box::new(e)),
        TrafficError::Tensor(t) => tensor(t, CliError::Failure),
        TrafficError::Config(_) => CliError::Config(e.to_string()),
        other => CliError::Failure(Box::new(other)),
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Failure(Box::new(e))
    }
}

impl From<OrbitalError> for CliError {
    fn from(e: OrbitalError) -> Self {
        CliError::Failure(Box::new(e))
    }
}

impl From<GeoError> for CliError {
    fn from(e: GeoError) -> Self {
        CliError::Failure(Box::new(e))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
