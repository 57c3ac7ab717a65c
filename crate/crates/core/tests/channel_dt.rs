use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use leo_twin::channel_dt::{
    amplitude_weight, baseline_from_condition, channel_metrics, hybrid_loss, hybrid_loss_value, load_channel_model,
    reverse_sample, reverse_sample_traced, train_channel_model, ChannelDtConfig, ChannelDtError, Denoiser,
    NoiseSchedule, OracleDenoiser, PgResUnet, PgResUnetConfig, ScheduleConfig, TrainConfig,
};
use leo_twin::channel_sim::{
    generate_channel_dataset, load_channel_dataset, ChannelDatasetConfig, ChannelInputs, LinkBudget, N_COND,
};
use leo_twin::geo_data::ClassTable;
use leo_twin::orbital::{KeplerPropagator, PropagatedSource};
use leo_twin::physics_tensor::{PhysicsParams, Rasters};
use leo_twin::scenario::{toy_channel_scenario, ToyChannelConfig};
use leo_twin_tensor::gradcheck::check_coords;
use leo_twin_tensor::{no_grad, ParamStore, Tensor};

#[test]
fn paper_schedule_reaches_near_isotropic_terminal() {
    let s = NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap();
    assert!(s.alpha_bar[999] < 1e-4);
    assert_eq!(s.beta[0], 1e-4);
    assert!((s.beta[999] - 0.02).abs() < 1e-15);
}

proptest! {
    #[test]
    fn schedule_identities(steps in 1usize..400, lo in 1e-5f64..1e-2, span in 0.0f64..0.05) {
        let s = NoiseSchedule::linear(steps, lo, lo + span).unwrap();
        prop_assert_eq!(s.posterior_beta[0], 0.0);
        prop_assert!((s.alpha_bar[0] - (1.0 - s.beta[0])).abs() < 1e-15);
        for k in 1..steps {
            prop_assert!((s.alpha_bar[k] - s.alpha_bar[k - 1] * s.alpha[k]).abs() <= 1e-15);
            prop_assert!(s.alpha_bar[k] < s.alpha_bar[k - 1]);
            prop_assert!(s.beta[k] >= s.beta[k - 1]);
            prop_assert!(s.posterior_beta[k] >= 0.0 && s.posterior_beta[k] <= s.beta[k]);
        }
    }
}

#[test]
fn forward_noise_examples() {
    let s = NoiseSchedule::linear(100, 1e-4, 0.02).unwrap();
    let x0 = [1.0, -2.0, 0.5];
    let y = s.forward_noise(&x0, 40, &[0.0; 3]).unwrap();
    for (a, b) in y.iter().zip(&x0) {
        assert!((a - s.alpha_bar[39].sqrt() * b).abs() < 1e-15);
    }
    let long = NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap();
    let eps = [0.3, -1.1, 2.0];
    let y = long.forward_noise(&x0, 1000, &eps).unwrap();
    for (a, e) in y.iter().zip(&eps) {
        assert!((a - e).abs() < 0.02);
    }
}

#[test]
fn forward_moments_match_closed_form() {
    let s = NoiseSchedule::linear(100, 1e-4, 0.02).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 100_000;
    for k in [1usize, 50, 100] {
        let eps: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let xs = s.forward_noise(&vec![1.0; n], k, &eps).unwrap();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - s.alpha_bar[k - 1].sqrt()).abs() < 0.01, "k {k}: mean {mean}");
        assert!((var - (1.0 - s.alpha_bar[k - 1])).abs() < 0.02, "k {k}: var {var}");
    }
}

#[test]
fn posterior_mean_first_step_and_scalar_coefficients() {
    let s = NoiseSchedule::linear(50, 1e-4, 0.02).unwrap();
    let x0 = [0.7, -0.2];
    assert_eq!(s.posterior_mean(&x0, &[3.0, 4.0], 1).unwrap(), x0.to_vec());
    for k in [2usize, 10, 50] {
        let ab = |j: usize| (1..=j).map(|i| 1.0 - s.beta[i - 1]).product::<f64>();
        let b = s.beta[k - 1];
        let c = ab(k - 1).sqrt() * b / (1.0 - ab(k)) + (1.0 - b).sqrt() * (1.0 - ab(k - 1)) / (1.0 - ab(k));
        let mu = s.posterior_mean(&[2.5], &[2.5], k).unwrap()[0];
        assert!((mu - c * 2.5).abs() < 1e-12, "k {k}");
    }
    assert!(s.posterior_mean(&x0, &x0, 0).is_err());
    assert!(s.posterior_mean(&x0, &x0, 51).is_err());
}

proptest! {
    /// Gaussian conditioning of `(x_{k−1}, x_k) | x0` from the one-step and
    /// marginal forward processes.
    #[test]
    fn posterior_mean_matches_gaussian_conditioning(k in 2usize..200, x0 in -3.0f64..3.0, xk in -3.0f64..3.0) {
        let s = NoiseSchedule::linear(200, 1e-4, 0.02).unwrap();
        let (ab_prev, a, b) = (s.alpha_bar[k - 2], s.alpha[k - 1], s.beta[k - 1]);
        let (m1, v1) = (ab_prev.sqrt() * x0, 1.0 - ab_prev);
        let (m2, v2, cov) = (a.sqrt() * m1, a * v1 + b, a.sqrt() * v1);
        let expect = m1 + cov / v2 * (xk - m2);
        let mu = s.posterior_mean(&[x0], &[xk], k).unwrap()[0];
        prop_assert!((mu - expect).abs() < 1e-10);
    }
}

#[test]
fn oracle_sampler_contracts_to_x0() {
    let s = NoiseSchedule::linear(100, 1e-4, 0.02).unwrap();
    let shape = [1, 8, 8];
    let mut data_rng = ChaCha8Rng::seed_from_u64(77);
    let x0: Vec<f64> = (0..128).map(|_| data_rng.random_range(-1.0..1.0)).collect();
    let oracle = OracleDenoiser { x0: x0.clone() };
    let mse = |x: &[f64]| x.iter().zip(&x0).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64;
    let mut mean_trace = vec![0.0; 100];
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trace = Vec::new();
        let out = reverse_sample_traced(&oracle, &[], shape, &s, &mut rng, |_, x| trace.push(mse(x))).unwrap();
        assert!(mse(&out) < 1e-3, "seed {seed}: {}", mse(&out));
        for (m, t) in mean_trace.iter_mut().zip(&trace) {
            *m += t / 20.0;
        }
    }
    for w in mean_trace.windows(2) {
        assert!(w[1] <= w[0], "{} then {}", w[0], w[1]);
    }
}

struct Affine;

impl Denoiser for Affine {
    fn denoise(&self, x_k: &[f64], k: usize, _cond: &[f64], _shape: [usize; 3]) -> Result<Vec<f64>, ChannelDtError> {
        Ok(x_k.iter().map(|v| 0.5 * v + k as f64).collect())
    }
}

#[test]
fn single_step_chain_returns_model_output() {
    let s = NoiseSchedule::linear(1, 1e-4, 1e-4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let out = reverse_sample(&Affine, &[], [1, 2, 2], &s, &mut rng).unwrap();
    let mut replay = ChaCha8Rng::seed_from_u64(5);
    let x1: Vec<f64> = (0..8).map(|_| replay.sample(StandardNormal)).collect();
    assert_eq!(out, Affine.denoise(&x1, 1, &[], [1, 2, 2]).unwrap());
}

#[test]
fn sampler_is_deterministic_and_flags_nan() {
    let s = NoiseSchedule::linear(20, 1e-4, 0.02).unwrap();
    let run = |seed| reverse_sample(&Affine, &[], [2, 2, 2], &s, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    assert_eq!(run(3), run(3));
    let nan = OracleDenoiser { x0: vec![f64::NAN; 8] };
    let err = reverse_sample(&nan, &[], [1, 2, 2], &s, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
    assert!(matches!(err, ChannelDtError::NonFinite { k: 20 }));
}

#[test]
fn hybrid_loss_hand_case() {
    let x0 = [1.0, 0.0, 0.0, 0.0];
    let m = amplitude_weight(&x0, 4.0, 0.5);
    assert_eq!(m, vec![5.0, 1.0, 1.0, 1.0]);
    let v = hybrid_loss_value(&x0, &[0.0; 4], &m, 0.05, 1).unwrap();
    assert!((v - 5.05).abs() < 1e-12);
    let t = hybrid_loss(
        &Tensor::new(x0.to_vec(), &[1, 2, 2]).unwrap(),
        &Tensor::zeros(&[1, 2, 2]),
        &Tensor::new(m, &[1, 2, 2]).unwrap(),
        0.05,
    )
    .unwrap();
    assert!((t.item() - 5.05).abs() < 1e-12);
    assert!(hybrid_loss_value(&x0, &x0, &[1.0, -1.0, 1.0, 1.0], 0.0, 1).is_err());
}

proptest! {
    #[test]
    fn hybrid_loss_nonnegative_zero_only_at_target(
        x0 in prop::collection::vec(-2.0f64..2.0, 8),
        pred in prop::collection::vec(-2.0f64..2.0, 8),
        lw in 0.0f64..8.0,
        lambda in 0.0f64..1.0,
    ) {
        let m = amplitude_weight(&x0, lw, 0.05);
        let v = hybrid_loss_value(&x0, &pred, &m, lambda, 2).unwrap();
        prop_assert!(v >= 0.0);
        prop_assert_eq!(hybrid_loss_value(&x0, &x0, &m, lambda, 2).unwrap(), 0.0);
        if x0 != pred {
            prop_assert!(v > 0.0);
        }
        let plain = hybrid_loss_value(&x0, &pred, &[1.0; 8], 0.0, 1).unwrap();
        let sq: f64 = x0.iter().zip(&pred).map(|(a, b)| (a - b) * (a - b)).sum();
        prop_assert!((plain - sq).abs() < 1e-12);
    }
}

fn grid_field(seed: u64, cells: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..2 * cells).map(|_| rng.random_range(-1.5..1.5)).collect()
}

#[test]
fn metrics_examples_and_brute_force() {
    let truth = grid_field(1, 16);
    let pred = grid_field(2, 16);
    let m = channel_metrics(&[&truth], &[&truth], 0.1).unwrap();
    assert_eq!((m.amp_mse, m.phase_mse), (0.0, 0.0));
    let zero = channel_metrics(&[&[0.0; 32]], &[&truth], 0.1).unwrap();
    let power = (0..16).map(|i| truth[i].powi(2) + truth[16 + i].powi(2)).sum::<f64>() / 16.0;
    assert!((zero.amp_mse - power).abs() < 1e-12);

    let m = channel_metrics(&[&pred], &[&truth], 0.3).unwrap();
    let (mut amp, mut phase, mut n_phase) = (0.0, 0.0, 0);
    let mut max = 0.0f64;
    for r in 0..4 {
        for c in 0..4 {
            let i = r * 4 + c;
            max = max.max(truth[i].hypot(truth[16 + i]));
        }
    }
    for r in 0..4 {
        for c in 0..4 {
            let i = r * 4 + c;
            let (at, ap) = (truth[i].hypot(truth[16 + i]), pred[i].hypot(pred[16 + i]));
            amp += (at - ap).powi(2);
            if at > 0.3 * max {
                let mut d = pred[16 + i].atan2(pred[i]) - truth[16 + i].atan2(truth[i]);
                while d > std::f64::consts::PI {
                    d -= std::f64::consts::TAU;
                }
                while d <= -std::f64::consts::PI {
                    d += std::f64::consts::TAU;
                }
                phase += d * d;
                n_phase += 1;
            }
        }
    }
    assert!((m.amp_mse - amp / 16.0).abs() < 1e-12);
    assert!((m.phase_mse - phase / n_phase as f64).abs() < 1e-12);
    assert!(matches!(
        channel_metrics(&[&[0.0; 32]], &[&[0.0; 32]], 0.1),
        Err(ChannelDtError::EmptyPhaseMask)
    ));
}

#[test]
fn baseline_recovers_fully_observed_field() {
    let truth = grid_field(9, 12);
    let mut cond = vec![0.0; N_COND * 12];
    cond[..24].copy_from_slice(&truth);
    cond[8 * 12..].fill(1.0);
    assert_eq!(baseline_from_condition(&cond, 3, 4).unwrap(), truth);
    cond[8 * 12..].fill(0.0);
    assert!(baseline_from_condition(&cond, 3, 4).is_err());
}

/// Four groups: no normalization group holds a single channel.
fn tiny_unet() -> PgResUnetConfig {
    PgResUnetConfig {
        base_channels: 8,
        time_embed_dim: 16,
        groups: 4,
        ..PgResUnetConfig::default()
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), shape).unwrap()
}

#[test]
fn unet_contracts() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut store = ParamStore::new();
    let net = PgResUnet::new(&mut store, tiny_unet(), &mut rng).unwrap();
    let x = random_tensor(&mut rng, &[2, 2, 8, 12]);
    let c = random_tensor(&mut rng, &[2, N_COND, 8, 12]);
    let _g = no_grad();
    let out = net.forward_with_attention(&x, &[3, 40], &c).unwrap();
    assert_eq!(out.x0.shape(), &[2, 2, 8, 12]);
    let a = out.attention.to_vec();
    let l = 2 * 3;
    assert_eq!(out.attention.shape(), &[2 * 4, l, l]);
    for row in a.chunks(l) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }
    assert_eq!(net.forward(&x, &[3, 40], &c).unwrap().to_vec(), out.x0.to_vec());
    let odd = random_tensor(&mut rng, &[1, 2, 6, 8]);
    let odd_c = random_tensor(&mut rng, &[1, N_COND, 6, 8]);
    assert!(net.forward(&odd, &[1], &odd_c).is_err());
    assert!(net.forward(&x, &[1], &c).is_err());
}

#[test]
fn unet_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut store = ParamStore::new();
    let net = PgResUnet::new(&mut store, tiny_unet(), &mut rng).unwrap();
    let x = random_tensor(&mut rng, &[1, 2, 8, 8]);
    let c = random_tensor(&mut rng, &[1, N_COND, 8, 8]);
    let r = random_tensor(&mut rng, &[1, 2, 8, 8]);
    let params: Vec<Tensor> = store.params().iter().map(|p| p.tensor.clone()).collect();
    let coords: Vec<(usize, usize)> = (0..10)
        .map(|_| {
            let p = rng.random_range(0..params.len());
            (p, rng.random_range(0..params[p].numel()))
        })
        .collect();
    let report = check_coords(&params, &coords, |_| {
        let y = net
            .forward(&x, &[7], &c)
            .map_err(|e| leo_twin_tensor::TensorError::Invalid {
                op: "unet",
                msg: e.to_string(),
            })?;
        y.mul(&r)?.sum()
    })
    .unwrap();
    assert_eq!(report.checked, 10);
    assert!(report.max_rel_error < 1e-4, "{}", report.max_rel_error);
}

fn tiny_dataset(dir: &std::path::Path) {
    let toy = toy_channel_scenario(&ToyChannelConfig {
        n: 8,
        t_pass: 2.0,
        ..ToyChannelConfig::default()
    })
    .unwrap();
    let source = PropagatedSource {
        tles: &toy.tles,
        propagator: KeplerPropagator::new(toy.sim_epoch, false),
    };
    let inputs = ChannelInputs {
        grid: &toy.grid,
        source: &source,
        rasters: Rasters {
            land: &toy.land,
            rain: &toy.rain,
        },
        classes: &ClassTable::default(),
        physics: &PhysicsParams::default(),
        budget: &LinkBudget::default(),
    };
    let cfg = ChannelDatasetConfig {
        n_slots: 40,
        ..ChannelDatasetConfig::default()
    };
    generate_channel_dataset(&inputs, &cfg, 3, dir).unwrap();
}

fn tiny_training(lr: f64) -> ChannelDtConfig {
    ChannelDtConfig {
        schedule: ScheduleConfig {
            steps: 10,
            beta_min: 1e-4,
            beta_max: 0.2,
        },
        unet: tiny_unet(),
        train: TrainConfig {
            lr,
            epochs: 2,
            batch: 8,
            seed: 5,
            ..TrainConfig::default()
        },
        ..ChannelDtConfig::default()
    }
}

#[test]
fn training_smoke_and_frozen_parameters() {
    let data = tempfile::tempdir().unwrap();
    tiny_dataset(data.path());
    let ds = load_channel_dataset(data.path()).unwrap();
    let out = tempfile::tempdir().unwrap();
    let report = train_channel_model(&ds, &tiny_training(1e-3), out.path()).unwrap();
    assert_eq!(report.losses.len(), 3);
    assert!(report.losses.iter().all(|l| l.val_loss.is_finite()));
    assert!(out.path().join("channel_epoch_002.ckpt").exists());
    let csv = std::fs::read_to_string(out.path().join("channel_loss.csv")).unwrap();
    assert!(csv.starts_with("epoch,train_loss,val_loss\n0,,"));

    let frozen = tempfile::tempdir().unwrap();
    let cfg = tiny_training(0.0);
    let report = train_channel_model(&ds, &cfg, frozen.path()).unwrap();
    let mut init = ParamStore::new();
    let fresh = {
        let seed = leo_twin::seeds::component_seed(cfg.train.seed, "channel.init");
        PgResUnet::new(&mut init, cfg.unet.clone(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        init.params()
            .iter()
            .flat_map(|p| p.tensor.to_vec())
            .collect::<Vec<f64>>()
    };
    let (_, loaded) = load_channel_model(&report.checkpoint, &cfg.unet).unwrap();
    let trained: Vec<f64> = loaded.params().iter().flat_map(|p| p.tensor.to_vec()).collect();
    assert_eq!(trained, fresh);
}
