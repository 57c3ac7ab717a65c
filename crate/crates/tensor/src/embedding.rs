//! Sinusoidal step embeddings.

use crate::error::{Result, TensorError};

/// Interleaved `[sin(k·ω₀), cos(k·ω₀), sin(k·ω₁), cos(k·ω₁), …]` with
/// geometric frequencies `ω_i = 10000^(−2i/dim)`.
pub fn sinusoidal_embedding(step: f64, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(TensorError::invalid(
            "sinusoidal_embedding",
            format!("dim {dim} must be even and positive"),
        ));
    }
    let half = dim / 2;
    let mut out = Vec::with_capacity(dim);
    for i in 0..half {
        let freq = embedding_frequency(i, dim);
        out.push((step * freq).sin());
        out.push((step * freq).cos());
    }
    Ok(out)
}

pub fn embedding_frequency(i: usize, dim: usize) -> f64 {
    10000f64.powf(-2.0 * i as f64 / dim as f64)
}
