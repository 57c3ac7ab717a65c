//! Physics-guided residual UNet denoiser predicting the clean channel `x̂0`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use leo_twin_tensor::{no_grad, sinusoidal_embedding, upsample_nearest, Conv2d, GroupNorm, Linear, ParamStore, Tensor};

use super::{ChannelDtError, Result};
use crate::channel_sim::N_COND;

pub const TARGET_CHANNELS: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PgResUnetConfig {
    #[serde(rename = "base")]
    pub base_channels: usize,
    /// Channel multiplier per level relative to `base`.
    pub multipliers: Vec<usize>,
    #[serde(rename = "heads")]
    pub attn_heads: usize,
    #[serde(default = "default_time_embed")]
    pub time_embed_dim: usize,
    #[serde(default = "default_groups")]
    pub groups: usize,
}

fn default_time_embed() -> usize {
    256
}

fn default_groups() -> usize {
    8
}

impl Default for PgResUnetConfig {
    fn default() -> Self {
        Self {
            base_channels: 64,
            multipliers: vec![1, 2, 4],
            attn_heads: 4,
            time_embed_dim: default_time_embed(),
            groups: default_groups(),
        }
    }
}

impl PgResUnetConfig {
    pub fn levels(&self) -> usize {
        self.multipliers.len()
    }

    pub fn in_channels(&self) -> usize {
        TARGET_CHANNELS + N_COND
    }

    pub fn channels(&self) -> Vec<usize> {
        self.multipliers.iter().map(|m| m * self.base_channels).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ChannelDtError::Config(msg));
        if self.multipliers.is_empty() || self.multipliers.contains(&0) || self.base_channels == 0 {
            return bad(format!(
                "base {} with multipliers {:?}",
                self.base_channels, self.multipliers
            ));
        }
        if self.time_embed_dim == 0 || self.time_embed_dim % 2 != 0 {
            return bad(format!("time embedding dim {} must be even", self.time_embed_dim));
        }
        for c in self.channels() {
            if self.groups == 0 || c % self.groups != 0 {
                return bad(format!("{c} channels not divisible into {} groups", self.groups));
            }
        }
        let bottleneck = *self.channels().last().expect("non-empty");
        if self.attn_heads == 0 || bottleneck % self.attn_heads != 0 {
            return bad(format!(
                "{bottleneck} channels not divisible into {} heads",
                self.attn_heads
            ));
        }
        Ok(())
    }
}

struct ResBlock {
    norm1: GroupNorm,
    conv1: Conv2d,
    time: Linear,
    norm2: GroupNorm,
    conv2: Conv2d,
    skip: Option<Conv2d>,
    c_out: usize,
}

impl ResBlock {
    fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        cfg: &PgResUnetConfig,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            norm1: GroupNorm::new(store, &format!("{name}.norm1"), cfg.groups, c_in, rng)?,
            conv1: Conv2d::new(store, &format!("{name}.conv1"), c_in, c_out, 3, 1, rng)?,
            time: Linear::new(store, &format!("{name}.time"), cfg.time_embed_dim, c_out, true, rng)?,
            norm2: GroupNorm::new(store, &format!("{name}.norm2"), cfg.groups, c_out, rng)?,
            conv2: Conv2d::new(store, &format!("{name}.conv2"), c_out, c_out, 3, 1, rng)?,
            skip: if c_in == c_out {
                None
            } else {
                Some(Conv2d::new(store, &format!("{name}.skip"), c_in, c_out, 1, 1, rng)?)
            },
            c_out,
        })
    }

    fn forward(&self, x: &Tensor, temb: &Tensor) -> Result<Tensor> {
        let b = x.shape()[0];
        let h = self.conv1.forward(&self.norm1.forward(x)?.silu()?)?;
        let t = self.time.forward(temb)?.reshape(&[b, self.c_out, 1, 1])?;
        let h = h.add(&t)?;
        let h = self.conv2.forward(&self.norm2.forward(&h)?.silu()?)?;
        let skip = match &self.skip {
            Some(c) => c.forward(x)?,
            None => x.clone(),
        };
        Ok(h.add(&skip)?)
    }
}

/// Multi-head self-attention over the flattened spatial positions with a
/// residual connection.
struct Attention {
    heads: usize,
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
}

impl Attention {
    fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, c: usize, heads: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            heads,
            q: Linear::new(store, &format!("{name}.q"), c, c, false, rng)?,
            k: Linear::new(store, &format!("{name}.k"), c, c, false, rng)?,
            v: Linear::new(store, &format!("{name}.v"), c, c, false, rng)?,
            out: Linear::new(store, &format!("{name}.out"), c, c, true, rng)?,
        })
    }

    /// Returns the output and the attention weights `(B·heads, L, L)`.
    fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let s = x.shape().to_vec();
        let (b, c, l) = (s[0], s[1], s[2] * s[3]);
        let (h, d) = (self.heads, c / self.heads);
        let tokens = x.reshape(&[b, c, l])?.permute(&[0, 2, 1])?;
        let split = |t: Tensor| -> Result<Tensor> {
            Ok(t.reshape(&[b, l, h, d])?
                .permute(&[0, 2, 1, 3])?
                .reshape(&[b * h, l, d])?)
        };
        let q = split(self.q.forward(&tokens)?)?;
        let k = split(self.k.forward(&tokens)?)?;
        let v = split(self.v.forward(&tokens)?)?;
        let weights = q.matmul(&k.transpose()?)?.scale(1.0 / (d as f64).sqrt())?.softmax(2)?;
        let mixed = weights
            .matmul(&v)?
            .reshape(&[b, h, l, d])?
            .permute(&[0, 2, 1, 3])?
            .reshape(&[b, l, c])?;
        let y = self.out.forward(&mixed)?.permute(&[0, 2, 1])?.reshape(&s)?;
        Ok((y.add(x)?, weights))
    }
}

struct Level {
    block: ResBlock,
    down: Option<Conv2d>,
}

struct UpLevel {
    block: ResBlock,
    up: Option<Conv2d>,
}

pub struct PgResUnet {
    pub config: PgResUnetConfig,
    time: Linear,
    conv_in: Conv2d,
    encoder: Vec<Level>,
    mid1: ResBlock,
    attn: Attention,
    mid2: ResBlock,
    decoder: Vec<UpLevel>,
    norm_out: GroupNorm,
    conv_out: Conv2d,
}

pub struct UnetOutput {
    pub x0: Tensor,
    /// Bottleneck attention weights, `(B·heads, L, L)`.
    pub attention: Tensor,
}

impl PgResUnet {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, config: PgResUnetConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let ch = config.channels();
        let levels = ch.len();
        let e = config.time_embed_dim;
        let time = Linear::new(store, "time.proj", e, e, true, rng)?;
        let conv_in = Conv2d::new(store, "conv_in", config.in_channels(), ch[0], 3, 1, rng)?;
        let mut encoder = Vec::with_capacity(levels);
        let mut c_prev = ch[0];
        for (i, &c) in ch.iter().enumerate() {
            let block = ResBlock::new(store, &format!("enc{i}.block"), c_prev, c, &config, rng)?;
            let down = if i + 1 < levels {
                Some(Conv2d::new(store, &format!("enc{i}.down"), c, c, 3, 2, rng)?)
            } else {
                None
            };
            encoder.push(Level { block, down });
            c_prev = c;
        }
        let cb = ch[levels - 1];
        let mid1 = ResBlock::new(store, "mid.block1", cb, cb, &config, rng)?;
        let attn = Attention::new(store, "mid.attn", cb, config.attn_heads, rng)?;
        let mid2 = ResBlock::new(store, "mid.block2", cb, cb, &config, rng)?;
        let mut decoder = Vec::with_capacity(levels);
        for i in (0..levels).rev() {
            let c = ch[i];
            let block = ResBlock::new(store, &format!("dec{i}.block"), 2 * c, c, &config, rng)?;
            let up = if i > 0 {
                Some(Conv2d::new(store, &format!("dec{i}.up"), c, ch[i - 1], 3, 1, rng)?)
            } else {
                None
            };
            decoder.push(UpLevel { block, up });
        }
        let norm_out = GroupNorm::new(store, "norm_out", config.groups, ch[0], rng)?;
        let conv_out = Conv2d::new(store, "conv_out", ch[0], TARGET_CHANNELS, 3, 1, rng)?;
        Ok(Self {
            config,
            time,
            conv_in,
            encoder,
            mid1,
            attn,
            mid2,
            decoder,
            norm_out,
            conv_out,
        })
    }

    pub fn check_input(&self, x_k: &Tensor, cond: &Tensor, steps: &[usize]) -> Result<()> {
        let (xs, cs) = (x_k.shape(), cond.shape());
        if xs.len() != 4 || xs[1] != TARGET_CHANNELS || cs.len() != 4 || cs[1] != N_COND {
            return Err(ChannelDtError::Shape(format!("x_k {xs:?}, condition {cs:?}")));
        }
        if xs[0] != cs[0] || xs[2..] != cs[2..] || steps.len() != xs[0] {
            return Err(ChannelDtError::Shape(format!(
                "x_k {xs:?}, condition {cs:?}, {} steps",
                steps.len()
            )));
        }
        let div = 1usize << (self.config.levels() - 1);
        if xs[2] % div != 0 || xs[3] % div != 0 {
            return Err(ChannelDtError::Shape(format!(
                "spatial size {}×{} not divisible by {div}",
                xs[2], xs[3]
            )));
        }
        Ok(())
    }

    pub fn time_embedding(&self, steps: &[usize]) -> Result<Tensor> {
        let e = self.config.time_embed_dim;
        let mut data = Vec::with_capacity(steps.len() * e);
        for &k in steps {
            data.extend(sinusoidal_embedding(k as f64, e)?);
        }
        Ok(self.time.forward(&Tensor::new(data, &[steps.len(), e])?)?.silu()?)
    }

    /// `x_k: (B, 2, H, W)`, `cond: (B, 9, H, W)`, one diffusion step per item.
    pub fn forward_with_attention(&self, x_k: &Tensor, steps: &[usize], cond: &Tensor) -> Result<UnetOutput> {
        self.check_input(x_k, cond, steps)?;
        let temb = self.time_embedding(steps)?;
        let mut h = self.conv_in.forward(&Tensor::concat(&[x_k, cond], 1)?)?;
        let mut skips = Vec::with_capacity(self.encoder.len());
        for level in &self.encoder {
            h = level.block.forward(&h, &temb)?;
            skips.push(h.clone());
            if let Some(down) = &level.down {
                h = down.forward(&h)?;
            }
        }
        h = self.mid1.forward(&h, &temb)?;
        let (a, attention) = self.attn.forward(&h)?;
        h = self.mid2.forward(&a, &temb)?;
        for level in &self.decoder {
            let skip = skips.pop().expect("one skip per level");
            h = level.block.forward(&Tensor::concat(&[&h, &skip], 1)?, &temb)?;
            if let Some(up) = &level.up {
                h = up.forward(&upsample_nearest(&h, 2)?)?;
            }
        }
        let x0 = self.conv_out.forward(&self.norm_out.forward(&h)?.silu()?)?;
        Ok(UnetOutput { x0, attention })
    }

    pub fn forward(&self, x_k: &Tensor, steps: &[usize], cond: &Tensor) -> Result<Tensor> {
        Ok(self.forward_with_attention(x_k, steps, cond)?.x0)
    }
}

impl super::Denoiser for PgResUnet {
    fn denoise(&self, x_k: &[f64], k: usize, cond: &[f64], shape: [usize; 3]) -> Result<Vec<f64>> {
        let [b, h, w] = shape;
        let _guard = no_grad();
        let x = Tensor::new(x_k.to_vec(), &[b, TARGET_CHANNELS, h, w])?;
        let c = Tensor::new(cond.to_vec(), &[b, N_COND, h, w])?;
        Ok(self.forward(&x, &vec![k; b], &c)?.to_vec())
    }
}
