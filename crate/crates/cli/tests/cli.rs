use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use leo_twin::orbital::{format_tle, TleRecord};

fn leotwin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leotwin"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn sha(path: &Path) -> Vec<u8> {
    Sha256::digest(fs::read(path).unwrap()).to_vec()
}

fn tle_file(dir: &Path) -> PathBuf {
    let mut text = String::new();
    for (i, raan) in [0.0, 40.0].into_iter().enumerate() {
        let rec = TleRecord {
            sat_id: 40001 + i as u32,
            name: Some(format!("SAT-{i}")),
            epoch: 1_704_067_200.0,
            inclination: 53.0,
            raan,
            eccentricity: 0.0001,
            arg_perigee: 0.0,
            mean_anomaly: 10.0 * i as f64,
            mean_motion: 15.05,
            bstar: 0.0,
        };
        let (l1, l2) = format_tle(&rec).unwrap();
        text.push_str(&format!("SAT-{i}\n{l1}\n{l2}\n"));
    }
    let path = dir.join("sats.tle");
    fs::write(&path, text).unwrap();
    path
}

fn propagate(tle: &Path, duration: &str, dt: &str, out: &Path) -> Output {
    leotwin(&[
        "propagate",
        "--tle",
        tle.to_str().unwrap(),
        "--start",
        "2024-01-01T00:00:00Z",
        "--duration",
        duration,
        "--dt",
        dt,
        "--out",
        out.to_str().unwrap(),
    ])
}

fn rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_owned).collect()
}

#[test]
fn zero_duration_writes_header_only() {
    let tmp = tempfile::tempdir().unwrap();
    let tle = tle_file(tmp.path());
    let out = propagate(&tle, "0", "1", &tmp.path().join("eph"));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let lines = rows(&tmp.path().join("eph/sat_40001.csv"));
    assert_eq!(lines, vec!["sat_id,t_s,x_km,y_km,z_km,vx_kms,vy_kms,vz_kms"]);
}

#[test]
fn propagation_samples_include_both_endpoints_and_repeat_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let tle = tle_file(tmp.path());
    let out = propagate(&tle, "60", "0.1", &tmp.path().join("a"));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(stdout(&out).lines().count(), 1);
    for id in [40001, 40002] {
        assert_eq!(rows(&tmp.path().join(format!("a/sat_{id}.csv"))).len(), 1 + 601);
    }
    propagate(&tle, "60", "0.1", &tmp.path().join("b"));
    for id in [40001, 40002] {
        let f = format!("sat_{id}.csv");
        assert_eq!(sha(&tmp.path().join("a").join(&f)), sha(&tmp.path().join("b").join(&f)));
    }
}

#[test]
fn malformed_element_set_exits_with_line_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let tle = tle_file(tmp.path());
    let text = fs::read_to_string(&tle).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    lines[2].truncate(40);
    fs::write(&tle, lines.join("\n")).unwrap();
    let out = propagate(&tle, "10", "1", &tmp.path().join("eph"));
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
    assert!(stdout(&out).is_empty());
}

#[test]
fn missing_element_file_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = propagate(&tmp.path().join("absent.tle"), "10", "1", &tmp.path().join("eph"));
    assert_eq!(code(&out), 3);
}

fn traffic_config(dir: &Path, seed: u64, out: &str) -> PathBuf {
    let cfg = json!({
        "schema_version": 1,
        "seed": seed,
        "output_dir": out,
        "scenario": {"toy_traffic": {"planes": 2, "sats_per_plane": 4, "cell_deg": 2.0}},
        "traffic": {
            "dataset": {"n_slots": 24, "dt": 1.0, "base_mbps": 100.0,
                        "residual": {"sigma": 5.0, "plane_weight": 0.3}},
            "model": {"hidden_dim": 8, "lookback": 3}
        },
        "train": {"traffic": {"epochs": 1, "batch": 4}},
        "eval": {"traffic": {"batch": 8}}
    });
    let path = dir.join(format!("traffic_{seed}_{out}.json"));
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn run_ok(args: &[&str]) -> String {
    let out = leotwin(args);
    assert_eq!(code(&out), 0, "{args:?}: {}", stderr(&out));
    stdout(&out)
}

#[test]
fn traffic_manifest_matches_directory_contents() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = traffic_config(tmp.path(), 1, "run");
    run_ok(&["gen-traffic", "--config", cfg.to_str().unwrap()]);
    let data = tmp.path().join("run/traffic/data");
    let m: Value = serde_json::from_str(&fs::read_to_string(data.join("manifest.json")).unwrap()).unwrap();
    let n_sats = m["sat_ids"].as_array().unwrap().len();
    let n_beams = m["n_beams"].as_u64().unwrap() as usize;
    assert_eq!(n_sats, 8);
    assert_eq!(rows(&data.join("traffic.csv")).len(), 1 + 24 * n_sats * n_beams);
    assert_eq!(fs::read_dir(data.join("graphs")).unwrap().count(), 24);
    let resolved: Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("run/config.json")).unwrap()).unwrap();
    assert_eq!(resolved["traffic"]["model"]["hidden_dim"], 8);
    assert_eq!(resolved["traffic"]["model"]["layers"], 2);
    assert_eq!(resolved["train"]["traffic"]["seed"], 1);
}

#[test]
fn seed_changes_data_but_not_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let keys = |m: &Value| m.as_object().unwrap().keys().cloned().collect::<Vec<_>>();
    let mut manifests = Vec::new();
    for (seed, out) in [(1, "a"), (1, "b"), (2, "c")] {
        let cfg = traffic_config(tmp.path(), seed, out);
        run_ok(&["gen-traffic", "--config", cfg.to_str().unwrap()]);
        manifests.push(tmp.path().join(out).join("traffic/data"));
    }
    let read = |d: &Path| serde_json::from_str::<Value>(&fs::read_to_string(d.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(
        sha(&manifests[0].join("manifest.json")),
        sha(&manifests[1].join("manifest.json"))
    );
    assert_eq!(keys(&read(&manifests[0])), keys(&read(&manifests[2])));
    assert_ne!(
        sha(&manifests[0].join("traffic.csv")),
        sha(&manifests[2].join("traffic.csv"))
    );
}

#[test]
fn untrained_traffic_eval_is_finite_and_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = traffic_config(tmp.path(), 3, "run");
    let cfg = cfg.to_str().unwrap();
    run_ok(&["gen-traffic", "--config", cfg]);
    let summary = run_ok(&["eval", "--config", cfg, "--task", "traffic", "--untrained"]);
    assert_eq!(summary.lines().count(), 1);
    let metrics = tmp.path().join("run/traffic/metrics.csv");
    let first = fs::read(&metrics).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    assert_eq!(text.lines().next(), Some("model,mse,r2"));
    for line in text.lines().skip(1) {
        let mse: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(mse.is_finite());
    }
    run_ok(&["eval", "--config", cfg, "--task", "traffic", "--untrained"]);
    assert_eq!(fs::read(&metrics).unwrap(), first);
}

#[test]
fn trained_traffic_checkpoint_round_trips_through_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = traffic_config(tmp.path(), 4, "run");
    let cfg = cfg.to_str().unwrap();
    run_ok(&["gen-traffic", "--config", cfg]);
    run_ok(&["train-traffic", "--config", cfg]);
    assert!(tmp.path().join("run/traffic/run/traffic_model.ckpt").exists());
    assert!(tmp.path().join("run/traffic/run/traffic_loss.csv").exists());
    run_ok(&["eval", "--config", cfg, "--task", "traffic"]);
    let first = fs::read(tmp.path().join("run/traffic/metrics.csv")).unwrap();
    run_ok(&["eval", "--config", cfg, "--task", "traffic"]);
    assert_eq!(fs::read(tmp.path().join("run/traffic/metrics.csv")).unwrap(), first);

    let mut other: Value = serde_json::from_str(&fs::read_to_string(cfg).unwrap()).unwrap();
    other["traffic"]["model"]["hidden_dim"] = json!(12);
    let other_path = tmp.path().join("wider.json");
    fs::write(&other_path, other.to_string()).unwrap();
    let ckpt = tmp.path().join("run/traffic/run/traffic_model.ckpt");
    let out = leotwin(&[
        "eval",
        "--config",
        other_path.to_str().unwrap(),
        "--task",
        "traffic",
        "--checkpoint",
        ckpt.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 6, "{}", stderr(&out));
}

#[test]
fn exploding_learning_rate_exits_5() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = traffic_config(tmp.path(), 5, "run");
    let mut v: Value = serde_json::from_str(&fs::read_to_string(&cfg).unwrap()).unwrap();
    v["traffic"]["model"]["lr"] = json!(1e300);
    v["train"]["traffic"]["epochs"] = json!(3);
    fs::write(&cfg, v.to_string()).unwrap();
    let cfg = cfg.to_str().unwrap();
    run_ok(&["gen-traffic", "--config", cfg]);
    let out = leotwin(&["train-traffic", "--config", cfg]);
    assert_eq!(code(&out), 5, "{}", stderr(&out));
}

#[test]
fn negative_traffic_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = traffic_config(tmp.path(), 6, "run");
    let mut v: Value = serde_json::from_str(&fs::read_to_string(&cfg).unwrap()).unwrap();
    v["traffic"]["dataset"]["base_mbps"] = json!(0.0);
    v["traffic"]["dataset"]["residual"]["sigma"] = json!(1e4);
    fs::write(&cfg, v.to_string()).unwrap();
    let out = leotwin(&["gen-traffic", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn config_errors_exit_2_and_missing_inputs_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let write = |name: &str, v: Value| {
        let p = tmp.path().join(name);
        fs::write(&p, v.to_string()).unwrap();
        p
    };
    let unknown = write(
        "unknown.json",
        json!({"schema_version": 1, "seed": 0, "output_dir": "o", "trafic": {}}),
    );
    let no_version = write("no_version.json", json!({"seed": 0, "output_dir": "o"}));
    let bad_version = write(
        "bad_version.json",
        json!({"schema_version": 9, "seed": 0, "output_dir": "o"}),
    );
    let nested = write(
        "nested.json",
        json!({"schema_version": 1, "seed": 0, "output_dir": "o", "traffic": {"model": {"hiden_dim": 3}}}),
    );
    for p in [&unknown, &no_version, &bad_version, &nested] {
        let out = leotwin(&["gen-traffic", "--config", p.to_str().unwrap()]);
        assert_eq!(code(&out), 2, "{}: {}", p.display(), stderr(&out));
    }
    let rasters = write(
        "rasters.json",
        json!({"schema_version": 1, "seed": 0, "output_dir": "o",
               "orbital": {"tle": "absent.tle"}, "rasters": {"population": "p.asc", "land_cover": "l.asc"}}),
    );
    let out = leotwin(&["gen-traffic", "--config", rasters.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    let absent = tmp.path().join("absent.json");
    assert_eq!(
        code(&leotwin(&["gen-traffic", "--config", absent.to_str().unwrap()])),
        3
    );
    let valid = traffic_config(tmp.path(), 1, "empty");
    assert_eq!(
        code(&leotwin(&["train-traffic", "--config", valid.to_str().unwrap()])),
        3
    );
}

fn channel_config(dir: &Path) -> PathBuf {
    let cfg = json!({
        "schema_version": 1,
        "seed": 2,
        "output_dir": "chan",
        "scenario": {"toy_channel": {"n": 8, "cell_deg": 0.2}},
        "channel": {"dataset": {"n_slots": 24, "dt": 0.5, "tau": 1.0}},
        "diffusion": {"schedule": {"K": 8}, "unet": {"base": 8, "multipliers": [1, 2], "heads": 2, "time_embed_dim": 16, "groups": 4}},
        "train": {"channel": {"epochs": 1, "batch": 8}},
        "eval": {"channel": {"batch": 8}}
    });
    let path = dir.join("channel.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn channel_pipeline_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = channel_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    run_ok(&["gen-channel", "--config", cfg]);
    let data = tmp.path().join("chan/channel/data");
    let m: Value = serde_json::from_str(&fs::read_to_string(data.join("manifest.json")).unwrap()).unwrap();
    let samples = m["samples"].as_array().unwrap();
    let on_disk = ["train", "test"]
        .iter()
        .map(|s| fs::read_dir(data.join(s)).map_or(0, |d| d.count()))
        .sum::<usize>();
    assert_eq!(samples.len(), on_disk);
    assert_eq!(samples.len(), 24 - 2);
    run_ok(&["train-channel", "--config", cfg]);
    let summary = run_ok(&["eval", "--config", cfg, "--task", "channel"]);
    assert!(summary.starts_with("eval channel:"));
    let text = fs::read_to_string(tmp.path().join("chan/channel/metrics.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epoch,split,amp_mse,phase_mse");
    assert_eq!(lines.len(), 3);
    for l in &lines[1..] {
        for v in l.split(',').skip(2) {
            assert!(v.parse::<f64>().unwrap().is_finite());
        }
    }
}
