//! Training, validation and test-set evaluation of the channel denoiser.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use leo_twin_tensor::checkpoint;
use leo_twin_tensor::{cosine_anneal, no_grad, OptimState, ParamStore, Tensor};

use super::{
    amplitude_weight, baseline_from_condition, hybrid_loss, ChannelDtError, ChannelMetrics, Denoiser, LossConfig,
    MetricsAccumulator, NoiseSchedule, PgResUnet, PgResUnetConfig, Result, ScheduleConfig, TARGET_CHANNELS,
};
use crate::channel_sim::{ChannelDataset, ChannelSample, N_COND};
use crate::seeds::component_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_eta_min")]
    pub eta_min: f64,
}

fn default_weight_decay() -> f64 {
    0.01
}

fn default_eta_min() -> f64 {
    1e-6
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            epochs: 30,
            batch: 16,
            seed: 0,
            weight_decay: default_weight_decay(),
            eta_min: default_eta_min(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub amp_threshold: f64,
    /// Reverse-chain draws averaged per estimate.
    #[serde(default = "default_eval_samples")]
    pub samples: usize,
    #[serde(default = "default_eval_batch")]
    pub batch: usize,
}

fn default_eval_samples() -> usize {
    1
}

fn default_eval_batch() -> usize {
    32
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            amp_threshold: 0.1,
            samples: default_eval_samples(),
            batch: default_eval_batch(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelDtConfig {
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub unet: PgResUnetConfig,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl ChannelDtConfig {
    pub fn validate(&self) -> Result<()> {
        NoiseSchedule::from_config(&self.schedule)?;
        self.unet.validate()?;
        self.loss.validate()?;
        let t = &self.train;
        if !(t.lr >= 0.0) || t.batch == 0 || !(t.weight_decay >= 0.0) || !(t.eta_min >= 0.0) {
            return Err(ChannelDtError::Config(format!("{t:?}")));
        }
        let e = &self.eval;
        if !(e.amp_threshold > 0.0 && e.amp_threshold < 1.0) || e.samples == 0 || e.batch == 0 {
            return Err(ChannelDtError::Config(format!("{e:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub val_loss: f64,
}

pub struct TrainReport {
    pub model: PgResUnet,
    pub store: ParamStore,
    pub losses: Vec<EpochLoss>,
    pub checkpoint: PathBuf,
}

/// One `(sample, subcarrier)` slice.
type Item = (usize, usize);

fn items(samples: &[ChannelSample]) -> Vec<Item> {
    samples
        .iter()
        .enumerate()
        .flat_map(|(i, s)| (0..s.n_c).map(move |k| (i, k)))
        .collect()
}

struct Batch {
    x0: Vec<f64>,
    cond: Vec<f64>,
}

fn gather(samples: &[ChannelSample], chunk: &[Item]) -> Batch {
    let mut x0 = Vec::new();
    let mut cond = Vec::new();
    for &(i, k) in chunk {
        x0.extend_from_slice(samples[i].target_slice(k));
        cond.extend_from_slice(samples[i].condition_slice(k));
    }
    Batch { x0, cond }
}

/// Noised inputs, steps and weights for one batch, drawn from `rng`.
fn noised<R: Rng + ?Sized>(
    b: &Batch,
    n: usize,
    sched: &NoiseSchedule,
    loss: &LossConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<usize>, Vec<f64>)> {
    let per = b.x0.len() / n;
    let mut x_k = Vec::with_capacity(b.x0.len());
    let mut steps = Vec::with_capacity(n);
    let mut weight = Vec::with_capacity(b.x0.len());
    for x0 in b.x0.chunks(per) {
        let k = rng.random_range(1..=sched.steps);
        let eps: Vec<f64> = (0..per).map(|_| rng.sample(StandardNormal)).collect();
        x_k.extend(sched.forward_noise(x0, k, &eps)?);
        steps.push(k);
        weight.extend(amplitude_weight(x0, loss.lambda_w, loss.tau_amp));
    }
    Ok((x_k, steps, weight))
}

fn batch_loss(
    model: &PgResUnet,
    b: &Batch,
    n: usize,
    hw: (usize, usize),
    sched: &NoiseSchedule,
    loss: &LossConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    let (h, w) = hw;
    let (x_k, steps, weight) = noised(b, n, sched, loss, rng)?;
    let x_k = Tensor::new(x_k, &[n, TARGET_CHANNELS, h, w])?;
    let cond = Tensor::new(b.cond.clone(), &[n, N_COND, h, w])?;
    let x0 = Tensor::new(b.x0.clone(), &[n, TARGET_CHANNELS, h, w])?;
    let m = Tensor::new(weight, &[n, TARGET_CHANNELS, h, w])?;
    let pred = model.forward(&x_k, &steps, &cond)?;
    hybrid_loss(&x0, &pred, &m, loss.lambda_l1)
}

/// Mean hybrid loss over `samples` with noise drawn from a fixed stream, so
/// successive calls are comparable.
fn validation_loss(
    model: &PgResUnet,
    samples: &[ChannelSample],
    hw: (usize, usize),
    sched: &NoiseSchedule,
    cfg: &ChannelDtConfig,
) -> Result<f64> {
    let _guard = no_grad();
    let mut rng = ChaCha8Rng::seed_from_u64(component_seed(cfg.train.seed, "channel.validation"));
    let all = items(samples);
    let mut total = 0.0;
    for chunk in all.chunks(cfg.train.batch) {
        let b = gather(samples, chunk);
        let l = batch_loss(model, &b, chunk.len(), hw, sched, &cfg.loss, &mut rng)?.item();
        total += l * chunk.len() as f64;
    }
    Ok(total / all.len().max(1) as f64)
}

fn grid_hw(ds: &ChannelDataset) -> (usize, usize) {
    (ds.manifest.grid.n_x, ds.manifest.grid.n_y)
}

pub fn epoch_checkpoint(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("channel_epoch_{epoch:03}.ckpt"))
}

/// AdamW with per-epoch cosine annealing; writes `channel_loss.csv`, one
/// checkpoint per epoch and `channel_model.ckpt`.
pub fn train_channel_model(ds: &ChannelDataset, cfg: &ChannelDtConfig, out_dir: &Path) -> Result<TrainReport> {
    train_channel_model_from(ds, cfg, out_dir, None)
}

/// Like [`train_channel_model`], starting from the parameters in `init` when given.
pub fn train_channel_model_from(
    ds: &ChannelDataset,
    cfg: &ChannelDtConfig,
    out_dir: &Path,
    init: Option<&Path>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if ds.train.is_empty() || ds.test.is_empty() {
        return Err(ChannelDtError::Config("dataset has an empty split".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let sched = NoiseSchedule::from_config(&cfg.schedule)?;
    let hw = grid_hw(ds);
    let seed = cfg.train.seed;
    let mut store = ParamStore::new();
    let mut init_rng = ChaCha8Rng::seed_from_u64(component_seed(seed, "channel.init"));
    let model = PgResUnet::new(&mut store, cfg.unet.clone(), &mut init_rng)?;
    if let Some(path) = init {
        checkpoint::load(path, &store)?;
    }
    let mut opt = OptimState::adamw(cfg.train.lr, cfg.train.weight_decay);
    let eta_min = cfg.train.eta_min.min(cfg.train.lr);

    let mut losses = vec![EpochLoss {
        epoch: 0,
        train_loss: None,
        val_loss: validation_loss(&model, &ds.test, hw, &sched, cfg)?,
    }];
    log::info!("epoch 0: val {:.6}", losses[0].val_loss);
    let mut order = items(&ds.train);
    let mut step = 0u64;
    for epoch in 1..=cfg.train.epochs {
        opt.lr = cosine_anneal(cfg.train.lr, cfg.train.epochs, eta_min, epoch - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(component_seed(seed, "channel.train"));
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.train.batch) {
            let b = gather(&ds.train, chunk);
            store.zero_grad();
            let loss = batch_loss(&model, &b, chunk.len(), hw, &sched, &cfg.loss, &mut rng)?;
            let l = loss.item();
            if !l.is_finite() {
                return Err(ChannelDtError::Diverged {
                    epoch,
                    step: step as usize,
                    loss: l,
                });
            }
            loss.backward()?;
            opt.step(store.params())?;
            total += l * chunk.len() as f64;
            step += 1;
        }
        let val = validation_loss(&model, &ds.test, hw, &sched, cfg)?;
        let train = total / order.len() as f64;
        log::info!("epoch {epoch}: train {train:.6}, val {val:.6}");
        losses.push(EpochLoss {
            epoch,
            train_loss: Some(train),
            val_loss: val,
        });
        checkpoint::save(&epoch_checkpoint(out_dir, epoch), &store, seed, step)?;
    }
    let mut w = csv::Writer::from_path(out_dir.join("channel_loss.csv"))?;
    for l in &losses {
        w.serialize(l)?;
    }
    w.flush()?;
    let final_path = out_dir.join("channel_model.ckpt");
    checkpoint::save(&final_path, &store, seed, step)?;
    Ok(TrainReport {
        model,
        store,
        losses,
        checkpoint: final_path,
    })
}

/// Rebuilds the architecture and loads parameters from a checkpoint.
pub fn load_channel_model(path: &Path, config: &PgResUnetConfig) -> Result<(PgResUnet, ParamStore)> {
    let mut store = ParamStore::new();
    let model = PgResUnet::new(&mut store, config.clone(), &mut ChaCha8Rng::seed_from_u64(0))?;
    checkpoint::load(path, &store)?;
    Ok((model, store))
}

/// Reverse-samples every `(sample, subcarrier)` slice of `samples` and scores
/// the mean of `eval.samples` chains against the targets.
pub fn evaluate_channel<D: Denoiser + ?Sized>(
    model: &D,
    samples: &[ChannelSample],
    hw: (usize, usize),
    schedule: &NoiseSchedule,
    eval: &EvalConfig,
    seed: u64,
) -> Result<ChannelMetrics> {
    let (h, w) = hw;
    let mut acc = MetricsAccumulator::new(eval.amp_threshold)?;
    let all = items(samples);
    for (bi, chunk) in all.chunks(eval.batch).enumerate() {
        let b = gather(samples, chunk);
        let mut rng = ChaCha8Rng::seed_from_u64(component_seed(seed, "channel.eval"));
        rng.set_stream(bi as u64);
        let mut mean = vec![0.0; b.x0.len()];
        for _ in 0..eval.samples {
            let x = super::reverse_sample(model, &b.cond, [chunk.len(), h, w], schedule, &mut rng)?;
            for (m, v) in mean.iter_mut().zip(&x) {
                *m += v / eval.samples as f64;
            }
        }
        let per = 2 * h * w;
        for (p, t) in mean.chunks(per).zip(b.x0.chunks(per)) {
            acc.add(p, t)?;
        }
    }
    acc.finish()
}

pub fn evaluate_baseline(samples: &[ChannelSample], hw: (usize, usize), amp_threshold: f64) -> Result<ChannelMetrics> {
    let mut acc = MetricsAccumulator::new(amp_threshold)?;
    for s in samples {
        for k in 0..s.n_c {
            let pred = baseline_from_condition(s.condition_slice(k), hw.0, hw.1)?;
            acc.add(&pred, s.target_slice(k))?;
        }
    }
    acc.finish()
}

pub const CHANNEL_METRICS_HEADER: [&str; 4] = ["epoch", "split", "amp_mse", "phase_mse"];

/// Writes `epoch,split,amp_mse,phase_mse` rows.
pub fn write_channel_metrics(path: &Path, rows: &[(usize, &str, ChannelMetrics)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CHANNEL_METRICS_HEADER)?;
    for (epoch, split, m) in rows {
        w.write_record([
            epoch.to_string(),
            split.to_string(),
            m.amp_mse.to_string(),
            m.phase_mse.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
