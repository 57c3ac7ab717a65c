//! Orbit-adaptive spatiotemporal graph network: per-slot dual-stream graph
//! attention over intra- and inter-plane neighbours, gated fusion, and a GRU
//! recurrence, stacked, followed by an MLP head.

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use leo_twin_tensor::{dropout, no_grad, Init, Linear, ParamStore, Tensor};

use super::{ConstellationGraph, Result, TrafficError};
use crate::orbital::wrap_lon;

/// Beam-summed residual plus four trigonometric position terms.
pub const INPUT_DIM: usize = 5;

const STD_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StGnnConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub lookback: usize,
    pub dropout: f64,
    pub lr: f64,
    pub t_max: usize,
    pub leaky_slope: f64,
}

impl Default for StGnnConfig {
    fn default() -> Self {
        Self {
            input_dim: INPUT_DIM,
            hidden_dim: 128,
            layers: 2,
            lookback: 12,
            dropout: 0.2,
            lr: 2e-3,
            t_max: 250,
            leaky_slope: 0.2,
        }
    }
}

impl StGnnConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.input_dim == INPUT_DIM
            && self.hidden_dim > 0
            && self.layers > 0
            && self.lookback > 0
            && (0.0..1.0).contains(&self.dropout)
            && self.lr >= 0.0
            && self.t_max > 0
            && self.leaky_slope >= 0.0;
        if !ok {
            return Err(TrafficError::Config(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Per-feature standardization fitted on the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ScalerState {
    /// Population mean and standard deviation (floored) of each column of
    /// row-major `data` with `dim` columns.
    pub fn fit(data: &[f64], dim: usize) -> Result<Self> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(TrafficError::Shape(format!("{} values in rows of {dim}", data.len())));
        }
        let n = (data.len() / dim) as f64;
        let mut mean = vec![0.0; dim];
        for row in data.chunks(dim) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in data.chunks(dim) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

/// `[scaled Σ_b residual, sin lat, cos lat, sin lon, cos lon]`.
pub fn encode_features(residual: &[f64], lat: f64, lon: f64, scaler: Option<&ScalerState>) -> Result<[f64; INPUT_DIM]> {
    let scaler = scaler.ok_or(TrafficError::ScalerMissing)?;
    if scaler.dim() != 1 {
        return Err(TrafficError::Shape(format!(
            "input scaler has {} features",
            scaler.dim()
        )));
    }
    let r = scaler.apply(&[residual.iter().sum::<f64>()])[0];
    let (sp, cp) = lat.to_radians().sin_cos();
    let (sl, cl) = wrap_lon(lon).to_radians().sin_cos();
    Ok([r, sp, cp, sl, cl])
}

/// Directed edges as parallel index arrays: `src[e]` is a neighbour of `dst[e]`.
#[derive(Clone, Debug, Default)]
pub struct EdgeList {
    pub dst: Rc<Vec<usize>>,
    pub src: Rc<Vec<usize>>,
}

impl EdgeList {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let (dst, src): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        Self {
            dst: Rc::new(dst),
            src: Rc::new(src),
        }
    }

    pub fn len(&self) -> usize {
        self.dst.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dst.is_empty()
    }
}

/// Several look-back windows stacked as disjoint graphs.
#[derive(Clone, Debug)]
pub struct WindowBatch {
    pub n_nodes: usize,
    /// Per step, `(n_nodes, INPUT_DIM)` row-major.
    pub features: Vec<Vec<f64>>,
    pub intra: Vec<EdgeList>,
    pub inter: Vec<EdgeList>,
}

impl WindowBatch {
    /// `windows[w][t]` is the feature block and graph of step `t` of window `w`.
    pub fn new(windows: &[Vec<(&[f64], &ConstellationGraph)>]) -> Result<Self> {
        let steps = windows.first().map_or(0, Vec::len);
        if steps == 0 || windows.iter().any(|w| w.len() != steps) {
            return Err(TrafficError::Shape("windows must share a nonzero length".into()));
        }
        let mut features = vec![Vec::new(); steps];
        let mut intra = vec![Vec::new(); steps];
        let mut inter = vec![Vec::new(); steps];
        let mut offset = 0;
        for w in windows {
            let n = w[0].1.n_nodes();
            for (t, (f, g)) in w.iter().enumerate() {
                if g.n_nodes() != n || f.len() != n * INPUT_DIM {
                    return Err(TrafficError::Shape(format!(
                        "step {t}: {} nodes and {} features, expected {n} nodes",
                        g.n_nodes(),
                        f.len()
                    )));
                }
                features[t].extend_from_slice(f);
                intra[t].extend(g.intra.iter().map(|&(i, j)| (i + offset, j + offset)));
                inter[t].extend(g.inter.iter().map(|&(i, j)| (i + offset, j + offset)));
            }
            offset += n;
        }
        Ok(Self {
            n_nodes: offset,
            features,
            intra: intra.into_iter().map(EdgeList::from_pairs).collect(),
            inter: inter.into_iter().map(EdgeList::from_pairs).collect(),
        })
    }

    pub fn steps(&self) -> usize {
        self.features.len()
    }
}

pub struct AttentionOutput {
    /// `(n, hidden)`
    pub m_intra: Tensor,
    pub m_inter: Tensor,
    /// One weight per edge, in edge-list order.
    pub alpha_intra: Option<Tensor>,
    pub alpha_inter: Option<Tensor>,
}

/// `e_ij = LeakyReLU(aᵀ[W h_i ‖ W h_j])`, softmax over each node's neighbours
/// of one link type, `m_i = ELU(Σ_j α_ij W h_j)`. `W` and `a` are shared
/// across the two link types.
#[derive(Clone, Debug)]
pub struct DualStreamAttention {
    pub w: Linear,
    /// `(hidden, 1)`: the half of `a` that multiplies `W h_i`.
    pub a_dst: Tensor,
    /// `(hidden, 1)`: the half of `a` that multiplies `W h_j`.
    pub a_src: Tensor,
    pub slope: f64,
}

impl DualStreamAttention {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        hidden: usize,
        slope: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let init = Init::FanInUniform { fan_in: 2 * hidden };
        Ok(Self {
            w: Linear::new(store, &format!("{name}.w"), d_in, hidden, false, rng)?,
            a_dst: store.create(&format!("{name}.a_dst"), &[hidden, 1], init.clone(), rng)?,
            a_src: store.create(&format!("{name}.a_src"), &[hidden, 1], init, rng)?,
            slope,
        })
    }

    fn stream(
        &self,
        wh: &Tensor,
        s_dst: &Tensor,
        s_src: &Tensor,
        edges: &EdgeList,
    ) -> Result<(Tensor, Option<Tensor>)> {
        let (n, hidden) = (wh.shape()[0], wh.shape()[1]);
        if edges.is_empty() {
            return Ok((Tensor::zeros(&[n, hidden]), None));
        }
        let e = s_dst
            .index_select(edges.dst.clone())?
            .add(&s_src.index_select(edges.src.clone())?)?
            .leaky_relu(self.slope)?
            .reshape(&[edges.len()])?;
        let alpha = e.segment_softmax(edges.dst.clone(), n)?;
        let msg = wh
            .index_select(edges.src.clone())?
            .mul(&alpha.reshape(&[edges.len(), 1])?)?;
        let m = msg.index_add(edges.dst.clone(), n)?.elu()?;
        Ok((m, Some(alpha)))
    }

    pub fn forward(&self, h: &Tensor, intra: &EdgeList, inter: &EdgeList) -> Result<AttentionOutput> {
        let wh = self.w.forward(h)?;
        let s_dst = wh.matmul(&self.a_dst)?;
        let s_src = wh.matmul(&self.a_src)?;
        let (m_intra, alpha_intra) = self.stream(&wh, &s_dst, &s_src, intra)?;
        let (m_inter, alpha_inter) = self.stream(&wh, &s_dst, &s_src, inter)?;
        Ok(AttentionOutput {
            m_intra,
            m_inter,
            alpha_intra,
            alpha_inter,
        })
    }
}

/// `g = σ(W_g[m^a ‖ m^e] + b_g)`, `u = g ⊙ m^a + (1−g) ⊙ m^e`.
#[derive(Clone, Debug)]
pub struct GatedFusion {
    pub gate: Linear,
}

impl GatedFusion {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, hidden: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            gate: Linear::new(store, &format!("{name}.gate"), 2 * hidden, hidden, true, rng)?,
        })
    }

    /// Returns `(u, g)`.
    pub fn forward(&self, m_intra: &Tensor, m_inter: &Tensor) -> Result<(Tensor, Tensor)> {
        let g = self.gate.forward(&Tensor::concat(&[m_intra, m_inter], 1)?)?.sigmoid()?;
        let u = m_inter.add(&g.mul(&m_intra.sub(m_inter)?)?)?;
        Ok((u, g))
    }
}

/// GRU over `[x ‖ u]`. Gate order in the input projection is `z, r, h̃`.
#[derive(Clone, Debug)]
pub struct GruCell {
    pub input: Linear,
    /// Recurrent weights of `z` and `r`, `(hidden, 2·hidden)`.
    pub recur_zr: Linear,
    pub recur_h: Linear,
    pub hidden: usize,
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            input: Linear::new(store, &format!("{name}.input"), d_in + hidden, 3 * hidden, true, rng)?,
            recur_zr: Linear::new(store, &format!("{name}.recur_zr"), hidden, 2 * hidden, false, rng)?,
            recur_h: Linear::new(store, &format!("{name}.recur_h"), hidden, hidden, false, rng)?,
            hidden,
        })
    }

    pub fn forward(&self, x: &Tensor, u: &Tensor, h: &Tensor) -> Result<Tensor> {
        let d = self.hidden;
        let gx = self.input.forward(&Tensor::concat(&[x, u], 1)?)?;
        let gh = self.recur_zr.forward(h)?;
        let z = gx.slice(1, 0, d)?.add(&gh.slice(1, 0, d)?)?.sigmoid()?;
        let r = gx.slice(1, d, 2 * d)?.add(&gh.slice(1, d, 2 * d)?)?.sigmoid()?;
        let cand = gx
            .slice(1, 2 * d, 3 * d)?
            .add(&self.recur_h.forward(&r.mul(h)?)?)?
            .tanh()?;
        h.add(&z.mul(&cand.sub(h)?)?).map_err(Into::into)
    }
}

#[derive(Clone, Debug)]
pub struct StGnnLayer {
    pub attention: DualStreamAttention,
    pub fusion: GatedFusion,
    pub gru: GruCell,
}

#[derive(Clone, Debug)]
pub struct StGnn {
    pub config: StGnnConfig,
    pub n_beams: usize,
    pub layers: Vec<StGnnLayer>,
    pub head_hidden: Linear,
    pub head_out: Linear,
}

impl StGnn {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        config: StGnnConfig,
        n_beams: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if n_beams == 0 {
            return Err(TrafficError::Config("n_beams must be at least 1".into()));
        }
        let h = config.hidden_dim;
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let d_in = if l == 0 { config.input_dim } else { h };
            let name = format!("layer{l}");
            layers.push(StGnnLayer {
                attention: DualStreamAttention::new(store, &format!("{name}.attn"), d_in, h, config.leaky_slope, rng)?,
                fusion: GatedFusion::new(store, &format!("{name}.fuse"), h, rng)?,
                gru: GruCell::new(store, &format!("{name}.gru"), d_in, h, rng)?,
            });
        }
        Ok(Self {
            head_hidden: Linear::new(store, "head.hidden", h, h, true, rng)?,
            head_out: Linear::new(store, "head.out", h, n_beams, true, rng)?,
            config,
            n_beams,
            layers,
        })
    }

    /// Scaled residual forecast for the slot after the window, `(n_nodes, n_beams)`.
    pub fn forward<R: Rng + ?Sized>(&self, batch: &WindowBatch, training: bool, rng: &mut R) -> Result<Tensor> {
        if batch.steps() != self.config.lookback {
            return Err(TrafficError::ShortWindow {
                found: batch.steps(),
                lookback: self.config.lookback,
            });
        }
        let n = batch.n_nodes;
        let mut hidden: Vec<Tensor> = (0..self.layers.len())
            .map(|_| Tensor::zeros(&[n, self.config.hidden_dim]))
            .collect();
        for t in 0..batch.steps() {
            let mut x = Tensor::new(batch.features[t].clone(), &[n, INPUT_DIM])?;
            for (layer, h) in self.layers.iter().zip(hidden.iter_mut()) {
                let att = layer.attention.forward(&x, &batch.intra[t], &batch.inter[t])?;
                let (u, _) = layer.fusion.forward(&att.m_intra, &att.m_inter)?;
                *h = layer.gru.forward(&x, &u, h)?;
                x = h.clone();
            }
        }
        let top = hidden.last().expect("at least one layer");
        let z = self.head_hidden.forward(top)?.relu()?;
        let z = dropout(&z, self.config.dropout, training, rng)?;
        Ok(self.head_out.forward(&z)?)
    }

    /// Evaluation-mode forecast without gradient tracking.
    pub fn predict(&self, batch: &WindowBatch) -> Result<Vec<f64>> {
        let _guard = no_grad();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.forward(batch, false, &mut rng)?.to_vec())
    }
}
