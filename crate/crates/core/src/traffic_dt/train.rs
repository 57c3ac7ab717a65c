//! Training of the traffic network and test-split scoring against the
//! persistence and AR-1 forecasters.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use leo_twin_tensor::checkpoint;
use leo_twin_tensor::{cosine_anneal, no_grad, OptimState, ParamStore, Tensor};

use super::{encode_features, Result, StGnn, StGnnConfig, TrafficDataset, TrafficError, WindowBatch, INPUT_DIM};
use crate::seeds::component_seed;

pub const TRAFFIC_METRICS_HEADER: &str = "model,mse,r2";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficTrainConfig {
    pub epochs: usize,
    /// Windows per optimizer step.
    pub batch: usize,
    pub seed: u64,
    #[serde(default)]
    pub eta_min: f64,
}

impl Default for TrafficTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch: 32,
            seed: 0,
            eta_min: 0.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficDtConfig {
    #[serde(default)]
    pub model: StGnnConfig,
    #[serde(default)]
    pub train: TrafficTrainConfig,
}

impl TrafficDtConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.train.batch == 0 || !(self.train.eta_min >= 0.0) {
            return Err(TrafficError::Config(format!("{:?}", self.train)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficEpochLoss {
    pub epoch: usize,
    pub train_loss: Option<f64>,
    pub val_loss: f64,
}

pub struct TrafficTrainReport {
    pub model: StGnn,
    pub store: ParamStore,
    pub losses: Vec<TrafficEpochLoss>,
    pub checkpoint: PathBuf,
}

/// Encoded inputs per slot and scaled targets per slot.
struct Prepared {
    features: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
}

fn prepare(ds: &TrafficDataset) -> Result<Prepared> {
    let m = &ds.manifest;
    let (n_s, n_b) = (ds.n_sats(), m.n_beams);
    let mut features = Vec::with_capacity(ds.n_slots);
    let mut targets = Vec::with_capacity(ds.n_slots);
    for n in 0..ds.n_slots {
        let res = ds.residual_at(n);
        let mut f = Vec::with_capacity(n_s * INPUT_DIM);
        let mut y = Vec::with_capacity(n_s * n_b);
        for i in 0..n_s {
            let r = &res[i * n_b..(i + 1) * n_b];
            let k = n * n_s + i;
            f.extend(encode_features(r, ds.lat[k], ds.lon[k], Some(&m.input_scaler))?);
            y.extend(m.target_scaler.apply(r));
        }
        features.push(f);
        targets.push(y);
    }
    Ok(Prepared { features, targets })
}

/// Target slots whose full look-back lies inside the dataset.
fn target_slots(range: std::ops::Range<usize>, lookback: usize) -> Vec<usize> {
    (range.start.max(lookback)..range.end).collect()
}

fn batch_for(ds: &TrafficDataset, prep: &Prepared, targets: &[usize], lookback: usize) -> Result<WindowBatch> {
    let windows: Vec<Vec<(&[f64], &super::ConstellationGraph)>> = targets
        .iter()
        .map(|&s| {
            (s - lookback..s)
                .map(|n| (prep.features[n].as_slice(), &ds.graphs[n]))
                .collect()
        })
        .collect();
    WindowBatch::new(&windows)
}

fn target_tensor(prep: &Prepared, targets: &[usize], n_b: usize) -> Result<Tensor> {
    let data: Vec<f64> = targets.iter().flat_map(|&s| prep.targets[s].iter().copied()).collect();
    let rows = data.len() / n_b;
    Ok(Tensor::new(data, &[rows, n_b])?)
}

fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    Ok(pred.sub(target)?.square()?.mean()?)
}

fn eval_loss(model: &StGnn, ds: &TrafficDataset, prep: &Prepared, slots: &[usize], batch: usize) -> Result<f64> {
    let _guard = no_grad();
    let lookback = model.config.lookback;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut total = 0.0;
    for chunk in slots.chunks(batch) {
        let b = batch_for(ds, prep, chunk, lookback)?;
        let pred = model.forward(&b, false, &mut rng)?;
        total += mse_loss(&pred, &target_tensor(prep, chunk, model.n_beams)?)?.item() * chunk.len() as f64;
    }
    Ok(total / slots.len().max(1) as f64)
}

/// Adam on the mean squared error of scaled residuals, with per-epoch cosine
/// annealing. Writes `traffic_loss.csv` and `traffic_model.ckpt`.
pub fn train_traffic_model(ds: &TrafficDataset, cfg: &TrafficDtConfig, out_dir: &Path) -> Result<TrafficTrainReport> {
    train_traffic_model_from(ds, cfg, out_dir, None)
}

/// Like [`train_traffic_model`], starting from the parameters in `init` when given.
pub fn train_traffic_model_from(
    ds: &TrafficDataset,
    cfg: &TrafficDtConfig,
    out_dir: &Path,
    init: Option<&Path>,
) -> Result<TrafficTrainReport> {
    cfg.validate()?;
    let lookback = cfg.model.lookback;
    let m = &ds.manifest;
    let train_slots = target_slots(m.train.start..m.train.end, lookback);
    let test_slots = target_slots(m.test.start..m.test.end, lookback);
    if train_slots.is_empty() || test_slots.is_empty() {
        return Err(TrafficError::Config(format!(
            "lookback {lookback} leaves no windows in a split"
        )));
    }
    std::fs::create_dir_all(out_dir)?;
    let prep = prepare(ds)?;
    let seed = cfg.train.seed;
    let mut store = ParamStore::new();
    let mut init_rng = ChaCha8Rng::seed_from_u64(component_seed(seed, "traffic.init"));
    let model = StGnn::new(&mut store, cfg.model.clone(), m.n_beams, &mut init_rng)?;
    if let Some(path) = init {
        checkpoint::load(path, &store)?;
    }
    let mut opt = OptimState::adam(cfg.model.lr);
    let eta_min = cfg.train.eta_min.min(cfg.model.lr);

    let mut losses = vec![TrafficEpochLoss {
        epoch: 0,
        train_loss: None,
        val_loss: eval_loss(&model, ds, &prep, &test_slots, cfg.train.batch)?,
    }];
    log::info!("epoch 0: val {:.6}", losses[0].val_loss);
    let mut order = train_slots.clone();
    let mut step = 0u64;
    for epoch in 1..=cfg.train.epochs {
        opt.lr = cosine_anneal(cfg.model.lr, cfg.model.t_max, eta_min, epoch - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(component_seed(seed, "traffic.train"));
        rng.set_stream(epoch as u64);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.train.batch) {
            let b = batch_for(ds, &prep, chunk, lookback)?;
            store.zero_grad();
            let pred = model.forward(&b, true, &mut rng)?;
            let loss = mse_loss(&pred, &target_tensor(&prep, chunk, m.n_beams)?)?;
            let l = loss.item();
            if !l.is_finite() {
                return Err(TrafficError::Diverged {
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
        let val = eval_loss(&model, ds, &prep, &test_slots, cfg.train.batch)?;
        let train = total / order.len() as f64;
        log::info!("epoch {epoch}: train {train:.6}, val {val:.6}");
        losses.push(TrafficEpochLoss {
            epoch,
            train_loss: Some(train),
            val_loss: val,
        });
    }
    let mut w = csv::Writer::from_path(out_dir.join("traffic_loss.csv"))?;
    for l in &losses {
        w.serialize(l)?;
    }
    w.flush()?;
    let path = out_dir.join("traffic_model.ckpt");
    checkpoint::save(&path, &store, seed, step)?;
    Ok(TrafficTrainReport {
        model,
        store,
        losses,
        checkpoint: path,
    })
}

pub fn load_traffic_model(path: &Path, config: &StGnnConfig, n_beams: usize) -> Result<(StGnn, ParamStore)> {
    let mut store = ParamStore::new();
    let model = StGnn::new(&mut store, config.clone(), n_beams, &mut ChaCha8Rng::seed_from_u64(0))?;
    checkpoint::load(path, &store)?;
    Ok((model, store))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficMetrics {
    pub model: String,
    pub mse: f64,
    pub r2: f64,
}

/// `1 − SSE/SST` with `SST` taken about the mean of `truth`; NaN when
/// `truth` is constant.
pub fn r_squared(pred: &[f64], truth: &[f64]) -> f64 {
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let sse: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    let sst: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if sst == 0.0 {
        f64::NAN
    } else {
        1.0 - sse / sst
    }
}

/// Next-slot total-traffic forecasts on the test split from the trained
/// model, persistence `X̂_{n+1} = X_n`, and the AR-1 optimum
/// `X̂_{n+1} = X^P_{n+1} + φ·X^R_n` with the generator's `φ`.
///
/// Each forecaster gets a row in Mbps² and a `_scaled` row with errors
/// divided by the per-beam target scale. R² is over total traffic.
pub fn evaluate_traffic(model: &StGnn, ds: &TrafficDataset, batch: usize) -> Result<Vec<TrafficMetrics>> {
    let m = &ds.manifest;
    let lookback = model.config.lookback;
    let slots = target_slots(m.test.start..m.test.end, lookback);
    if slots.is_empty() {
        return Err(TrafficError::Config("test split has no complete windows".into()));
    }
    let prep = prepare(ds)?;
    let (w, n_b) = (ds.width(), m.n_beams);
    let phi = m.config.residual.phi;
    let mut truth = Vec::with_capacity(slots.len() * w);
    let mut preds: [Vec<f64>; 3] = Default::default();
    for chunk in slots.chunks(batch.max(1)) {
        let b = batch_for(ds, &prep, chunk, lookback)?;
        let scaled = model.predict(&b)?;
        for (c, &s) in chunk.iter().enumerate() {
            let now = &ds.total[s * w..(s + 1) * w];
            let base = &ds.baseline[s * w..(s + 1) * w];
            truth.extend_from_slice(now);
            for (node, rows) in scaled[c * w..(c + 1) * w].chunks(n_b).enumerate() {
                let r = m.target_scaler.invert(rows);
                for (bb, v) in r.into_iter().enumerate() {
                    preds[0].push(base[node * n_b + bb] + v);
                }
            }
            preds[1].extend_from_slice(&ds.total[(s - 1) * w..s * w]);
            preds[2].extend(base.iter().zip(ds.residual_at(s - 1)).map(|(p, r)| p + phi * r));
        }
    }
    let names = ["st_gnn", "persistence", "ar1_optimum"];
    let mut out = Vec::new();
    for (name, p) in names.iter().zip(&preds) {
        let n = truth.len() as f64;
        let mse = p.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n;
        let scaled = p
            .iter()
            .zip(&truth)
            .enumerate()
            .map(|(i, (a, b))| ((a - b) / m.target_scaler.std[i % n_b]).powi(2))
            .sum::<f64>()
            / n;
        let r2 = r_squared(p, &truth);
        out.push(TrafficMetrics {
            model: name.to_string(),
            mse,
            r2,
        });
        out.push(TrafficMetrics {
            model: format!("{name}_scaled"),
            mse: scaled,
            r2,
        });
    }
    Ok(out)
}

pub fn write_traffic_metrics(path: &Path, rows: &[TrafficMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
