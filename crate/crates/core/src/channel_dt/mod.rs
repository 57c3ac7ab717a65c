//! Physics-conditional denoising diffusion for channel reconstruction.

mod loss;
mod metrics;
mod sampler;
mod schedule;
mod train;
mod unet;

pub use loss::{amplitude_weight, hybrid_loss, hybrid_loss_value, LossConfig};
pub use metrics::{
    baseline_from_condition, baseline_interpolate, channel_metrics, nearest_fill, ChannelMetrics, MetricsAccumulator,
};
pub use sampler::{reverse_sample, reverse_sample_traced, OracleDenoiser};
pub use schedule::{NoiseSchedule, ScheduleConfig};
pub use train::{
    evaluate_baseline, evaluate_channel, load_channel_model, train_channel_model, train_channel_model_from,
    write_channel_metrics, ChannelDtConfig, EpochLoss, EvalConfig, TrainConfig, TrainReport, CHANNEL_METRICS_HEADER,
};
pub use unet::{PgResUnet, PgResUnetConfig, UnetOutput, TARGET_CHANNELS};

use leo_twin_tensor::TensorError;

use crate::channel_sim::ChannelError;

#[derive(Debug, thiserror::Error)]
pub enum ChannelDtError {
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("diffusion step {k} outside 1..={steps}")]
    StepRange { k: usize, steps: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value in the reverse chain at step {k}")]
    NonFinite { k: usize },
    #[error("training diverged at epoch {epoch}, step {step}: loss {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },
    #[error("no pilots observed")]
    EmptyMask,
    #[error("no cell above the phase amplitude threshold")]
    EmptyPhaseMask,
    #[error("negative loss weight {0}")]
    NegativeWeight(f64),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, ChannelDtError>;

/// Any model mapping `(x_k, k, C)` to a clean-channel estimate `x̂0`.
/// Buffers are `(B, 2, H, W)` and `(B, 9, H, W)` with `shape = [B, H, W]`.
pub trait Denoiser {
    fn denoise(&self, x_k: &[f64], k: usize, cond: &[f64], shape: [usize; 3]) -> Result<Vec<f64>>;
}
