//! Minimal reverse-mode automatic differentiation over dense `f64` tensors,
//! with the layers, optimizers and checkpoint format used by the learning
//! engines.

pub mod activation;
pub mod checkpoint;
pub mod conv;
pub mod embedding;
pub mod error;
pub mod gradcheck;
pub mod nn;
pub mod norm;
pub mod ops;
pub mod optim;
pub mod tensor;

pub use conv::{conv2d, upsample_nearest};
pub use embedding::sinusoidal_embedding;
pub use error::{Result, TensorError};
pub use nn::{Conv2d, GroupNorm, Init, LayerNorm, Linear, ParamStore, Parameter};
pub use norm::{dropout, group_norm, layer_norm};
pub use ops::broadcast_shapes;
pub use optim::{cosine_anneal, OptimState, Scheme};
pub use tensor::{grad_enabled, no_grad, NoGradGuard, Tensor};
