//! Group and layer normalization, and inverted dropout.

use rand::Rng;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Normalizes contiguous blocks of `block` values; returns (x̂, 1/σ per block).
fn normalize_blocks(x: &[f64], block: usize, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let blocks = x.len() / block;
    let mut xhat = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; blocks];
    for b in 0..blocks {
        let seg = &x[b * block..(b + 1) * block];
        let mean = seg.iter().sum::<f64>() / block as f64;
        let var = seg.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / block as f64;
        let is = 1.0 / (var + eps).sqrt();
        inv_std[b] = is;
        for (o, v) in xhat[b * block..(b + 1) * block].iter_mut().zip(seg) {
            *o = (v - mean) * is;
        }
    }
    (xhat, inv_std)
}

/// Backward of the block normalization given dL/dx̂.
fn normalize_blocks_backward(dxhat: &[f64], xhat: &[f64], inv_std: &[f64], block: usize) -> Vec<f64> {
    let m = block as f64;
    let mut dx = vec![0.0; dxhat.len()];
    for (b, is) in inv_std.iter().enumerate() {
        let r = b * block..(b + 1) * block;
        let sum_d: f64 = dxhat[r.clone()].iter().sum();
        let sum_dx: f64 = dxhat[r.clone()].iter().zip(&xhat[r.clone()]).map(|(d, x)| d * x).sum();
        for i in r {
            dx[i] = is / m * (m * dxhat[i] - sum_d - xhat[i] * sum_dx);
        }
    }
    dx
}

/// Group normalization of `(N, C, ...)` with per-channel affine
/// `gamma, beta: (C)`.
pub fn group_norm(x: &Tensor, groups: usize, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    let s = x.shape().to_vec();
    if s.len() < 2 {
        return Err(TensorError::invalid("group_norm", format!("rank of {s:?} < 2")));
    }
    let (n, c) = (s[0], s[1]);
    if groups == 0 || c % groups != 0 {
        return Err(TensorError::invalid(
            "group_norm",
            format!("{c} channels not divisible into {groups} groups"),
        ));
    }
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(TensorError::shape("group_norm affine", gamma.shape(), &[c]));
    }
    let spatial: usize = s[2..].iter().product();
    let block = c / groups * spatial;
    let (xhat, inv_std) = normalize_blocks(&x.data(), block, eps);
    let mut out = vec![0.0; xhat.len()];
    {
        let (gm, bt) = (gamma.data(), beta.data());
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * spatial;
                for i in base..base + spatial {
                    out[i] = gm[ci] * xhat[i] + bt[ci];
                }
            }
        }
    }
    let (tg, tx) = (gamma.clone(), x.clone());
    Tensor::from_op("group_norm", out, s, &[x, gamma, beta], move |g, _| {
        let gm = tg.data();
        let mut dgamma = vec![0.0; c];
        let mut dbeta = vec![0.0; c];
        let mut dxhat = vec![0.0; g.len()];
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * spatial;
                for i in base..base + spatial {
                    dgamma[ci] += g[i] * xhat[i];
                    dbeta[ci] += g[i];
                    dxhat[i] = g[i] * gm[ci];
                }
            }
        }
        let dx = tx
            .requires_grad()
            .then(|| normalize_blocks_backward(&dxhat, &xhat, &inv_std, block));
        vec![dx, Some(dgamma), Some(dbeta)]
    })
}

/// Layer normalization over the last axis with affine `gamma, beta: (D)`.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f64) -> Result<Tensor> {
    let s = x.shape().to_vec();
    let d = *s
        .last()
        .ok_or_else(|| TensorError::invalid("layer_norm", "scalar input"))?;
    if gamma.shape() != [d] || beta.shape() != [d] {
        return Err(TensorError::shape("layer_norm affine", gamma.shape(), &[d]));
    }
    let (xhat, inv_std) = normalize_blocks(&x.data(), d, eps);
    let out: Vec<f64> = {
        let (gm, bt) = (gamma.data(), beta.data());
        xhat.iter()
            .enumerate()
            .map(|(i, v)| gm[i % d] * v + bt[i % d])
            .collect()
    };
    let (tg, tx) = (gamma.clone(), x.clone());
    Tensor::from_op("layer_norm", out, s, &[x, gamma, beta], move |g, _| {
        let gm = tg.data();
        let mut dgamma = vec![0.0; d];
        let mut dbeta = vec![0.0; d];
        let dxhat: Vec<f64> = g.iter().enumerate().map(|(i, gv)| gv * gm[i % d]).collect();
        for (i, gv) in g.iter().enumerate() {
            dgamma[i % d] += gv * xhat[i];
            dbeta[i % d] += gv;
        }
        let dx = tx
            .requires_grad()
            .then(|| normalize_blocks_backward(&dxhat, &xhat, &inv_std, d));
        vec![dx, Some(dgamma), Some(dbeta)]
    })
}

/// Inverted dropout: in training mode zeroes each entry with probability
/// `p` and rescales survivors by `1/(1-p)`; identity otherwise.
pub fn dropout<R: Rng + ?Sized>(x: &Tensor, p: f64, training: bool, rng: &mut R) -> Result<Tensor> {
    if !(0.0..1.0).contains(&p) {
        return Err(TensorError::invalid("dropout", format!("p = {p} outside [0,1)")));
    }
    if !training || p == 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..x.numel())
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    let m = Tensor::new(mask, x.shape())?;
    x.mul(&m)
}
