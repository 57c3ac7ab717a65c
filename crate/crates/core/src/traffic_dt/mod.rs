//! Traffic digital twin: physics baseline, AR-1 residuals, time-varying
//! constellation graphs and the spatiotemporal graph network that forecasts
//! next-slot residual traffic.

mod baseline;
mod dataset;
mod graph;
mod model;
mod residual;
mod train;

pub use baseline::{
    beam_boresight, ellipsoid_cell_area, hanning_smooth, hanning_window, physics_baseline, BaselineMode, BeamLayout,
    TRAFFIC_QUANTUM,
};
pub use dataset::{
    generate_traffic_dataset, load_traffic_dataset, slot_positions, TrafficDataset, TrafficDatasetConfig,
    TrafficInputs, TrafficManifest, TRAFFIC_HEADER,
};
pub use graph::{
    argument_of_latitude, build_graph, cluster_planes, knn_neighbors, orbit_plane, read_graph, write_graph,
    ConstellationGraph, GraphConfig, GraphMode, GRAPH_HEADER,
};
pub use model::{
    encode_features, AttentionOutput, DualStreamAttention, EdgeList, GatedFusion, GruCell, ScalerState, StGnn,
    StGnnConfig, WindowBatch, INPUT_DIM,
};
pub use residual::{decompose, quantize, recompose, synthesize_residual, ResidualConfig, TrafficSnapshot};
pub use train::{
    evaluate_traffic, load_traffic_model, r_squared, train_traffic_model, train_traffic_model_from,
    write_traffic_metrics, TrafficDtConfig, TrafficEpochLoss, TrafficMetrics, TrafficTrainConfig, TrafficTrainReport,
    TRAFFIC_METRICS_HEADER,
};

use thiserror::Error;

use crate::geo_data::GeoError;
use crate::orbital::OrbitalError;
use leo_twin_tensor::TensorError;

#[derive(Debug, Error)]
pub enum TrafficError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("AR-1 coefficient |phi| = {0} must be below 1")]
    Unstable(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("negative traffic {value} Mbps at slot {slot}, node {node}")]
    NegativeTraffic { slot: usize, node: usize, value: f64 },
    #[error("graph: {0}")]
    Graph(String),
    #[error("window has {found} snapshots, lookback is {lookback}")]
    ShortWindow { found: usize, lookback: usize },
    #[error("scaler has not been fitted")]
    ScalerMissing,
    #[error("training diverged at epoch {epoch}, step {step}: loss {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Orbital(#[from] OrbitalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, TrafficError>;
