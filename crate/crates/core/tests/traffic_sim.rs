use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use leo_twin::geo_data::{ClassTable, LandCoverClass, RasterGrid};
use leo_twin::orbital::{
    geodetic_to_ecef, look_angles, EphemerisRecord, GeodeticPoint, KeplerPropagator, Propagator, TleRecord, MU,
    WGS84_A, WGS84_F,
};
use leo_twin::traffic_dt::{
    build_graph, decompose, ellipsoid_cell_area, hanning_smooth, hanning_window, knn_neighbors, physics_baseline,
    quantize, recompose, synthesize_residual, BaselineMode, BeamLayout, GraphConfig, GraphMode, ResidualConfig,
    TrafficError, TRAFFIC_QUANTUM,
};

fn full_penetration() -> ClassTable {
    ClassTable {
        classes: vec![LandCoverClass {
            code: 1,
            name: "Rural".into(),
            rician_k_db: None,
            penetration: 1.0,
        }],
    }
}

/// Square raster of `half` degrees around (0, 0).
fn patch(half: f64, cs: f64, f: impl Fn(f64, f64) -> f64) -> RasterGrid {
    let n = (2.0 * half / cs).round() as usize;
    RasterGrid::from_fn(n, n, -half, -half, cs, f).unwrap()
}

fn over_origin(alt_km: f64) -> EphemerisRecord {
    let p = GeodeticPoint::new(0.0, 0.0, alt_km * 1000.0).unwrap();
    EphemerisRecord {
        sat_id: 1,
        t: 0.0,
        position: geodetic_to_ecef(&p),
        velocity: [0.0, 0.0, 7.6],
    }
}

fn layout(half_width: f64, min_elevation: f64) -> BeamLayout {
    BeamLayout {
        n_beams: 1,
        offsets: vec![[0.0, 0.0]],
        half_width,
        min_elevation,
    }
}

#[test]
fn globe_area_matches_wgs84_surface() {
    let total: f64 = (0..180)
        .map(|i| ellipsoid_cell_area(-90.0 + i as f64, -89.0 + i as f64, 360.0))
        .sum();
    assert!((total / 510_065_621.7 - 1.0).abs() < 1e-8, "{total}");
}

#[test]
fn uniform_density_matches_spherical_cap() {
    let (omega, rho, h, eta) = (100.0, 1e-6, 550.0, 30f64.to_radians());
    let pop = patch(4.0, 0.05, |_, _| omega);
    let land = patch(4.0, 0.05, |_, _| 1.0);
    let got = physics_baseline(
        &[over_origin(h)],
        &pop,
        &land,
        &full_penetration(),
        &layout(30.0, 10.0),
        rho,
        BaselineMode::Integral,
    )
    .unwrap()[0];
    // Gaussian radius of curvature at the equator.
    let e2 = WGS84_F * (2.0 - WGS84_F);
    let r = (WGS84_A * WGS84_A * (1.0 - e2)).sqrt();
    let lambda = (((r + h) / r) * eta.sin()).asin() - eta;
    let area = 2.0 * std::f64::consts::PI * r * r * (1.0 - lambda.cos());
    let want = rho * omega * area;
    assert!((got / want - 1.0).abs() < 0.01, "{got} vs {want}");
}

#[test]
fn zero_population_gives_zero() {
    let pop = patch(4.0, 0.1, |_, _| 0.0);
    let land = patch(4.0, 0.1, |_, _| 1.0);
    let v = physics_baseline(
        &[over_origin(550.0)],
        &pop,
        &land,
        &full_penetration(),
        &BeamLayout::default(),
        1e-6,
        BaselineMode::Integral,
    )
    .unwrap();
    assert_eq!(v, vec![0.0]);
}

#[test]
fn footprint_outside_raster_gives_zero() {
    let pop = RasterGrid::from_fn(10, 10, 100.0, 50.0, 0.1, |_, _| 500.0).unwrap();
    let land = pop.clone();
    let v = physics_baseline(
        &[over_origin(550.0)],
        &pop,
        &land,
        &ClassTable::default(),
        &BeamLayout::default(),
        1e-6,
        BaselineMode::Integral,
    )
    .unwrap();
    assert_eq!(v, vec![0.0]);
}

#[test]
fn random_field_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let half = 4.0;
    let cells: Vec<f64> = (0..160 * 160).map(|_| rng.random_range(0.0..200.0)).collect();
    let pop = RasterGrid::new(160, 160, -half, -half, 0.05, -9999.0, cells).unwrap();
    let land = patch(half, 0.05, |_, _| 1.0);
    let sat = over_origin(550.0);
    let (hw, el) = (30.0, 10.0);
    let quad = physics_baseline(
        &[sat],
        &pop,
        &land,
        &full_penetration(),
        &layout(hw, el),
        1.0,
        BaselineMode::Integral,
    )
    .unwrap()[0];

    // Uniform draws in (lat, lon) weighted by the ellipsoid area element M·N·cos φ.
    let e2 = WGS84_F * (2.0 - WGS84_F);
    let nadir = {
        let r = sat.position;
        let n = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        [-r[0] / n, -r[1] / n, -r[2] / n]
    };
    let cos_hw = hw.to_radians().cos();
    let n_draws = 1_000_000;
    let mut acc = 0.0;
    for _ in 0..n_draws {
        let lat: f64 = rng.random_range(-half..half);
        let lon: f64 = rng.random_range(-half..half);
        let g = geodetic_to_ecef(&GeodeticPoint::new(lat, lon, 0.0).unwrap());
        let la = look_angles(&sat.position, &g).unwrap();
        let d = [g[0] - sat.position[0], g[1] - sat.position[1], g[2] - sat.position[2]];
        let cos_off = (d[0] * nadir[0] + d[1] * nadir[1] + d[2] * nadir[2]) / la.slant_range;
        if la.elevation < el || cos_off < cos_hw {
            continue;
        }
        let s = lat.to_radians().sin();
        let w = 1.0 - e2 * s * s;
        let m = WGS84_A * (1.0 - e2) / w.powf(1.5);
        let n = WGS84_A / w.sqrt();
        acc += pop.sample_nearest(lat, lon).unwrap() * m * n * lat.to_radians().cos();
    }
    let span = (2.0 * half).to_radians();
    let mc = span * span * acc / n_draws as f64;
    assert!((quad / mc - 1.0).abs() < 0.01, "{quad} vs {mc}");
}

#[test]
fn tilted_beams_split_the_footprint() {
    let pop = patch(8.0, 0.1, |_, _| 100.0);
    let land = patch(8.0, 0.1, |_, _| 1.0);
    let lay = BeamLayout {
        n_beams: 3,
        offsets: vec![[0.0, 0.0], [20.0, 0.0], [-20.0, 0.0]],
        half_width: 8.0,
        min_elevation: 10.0,
    };
    let v = physics_baseline(
        &[over_origin(550.0)],
        &pop,
        &land,
        &full_penetration(),
        &lay,
        1e-3,
        BaselineMode::Integral,
    )
    .unwrap();
    assert_eq!(v.len(), 3);
    assert!(v.iter().all(|x| *x > 0.0));
    // Tilted beams see a larger ground patch than the nadir beam.
    assert!(v[1] > v[0] && v[2] > v[0]);
    assert!((v[1] / v[2] - 1.0).abs() < 0.02);
}

#[test]
fn peak_pool_takes_window_maximum() {
    let pop = patch(1.0, 0.02, |lat, lon| {
        if lat.abs() < 0.03 && lon.abs() < 0.03 {
            900.0
        } else {
            10.0
        }
    });
    let land = patch(1.0, 0.02, |_, _| 1.0);
    let v = physics_baseline(
        &[over_origin(550.0)],
        &pop,
        &land,
        &full_penetration(),
        &BeamLayout::default(),
        2.0,
        BaselineMode::PeakPool,
    )
    .unwrap();
    assert_eq!(v, vec![1800.0]);
}

#[test]
fn invalid_baseline_inputs_are_rejected() {
    let pop = patch(1.0, 0.1, |_, _| 1.0);
    let land = pop.clone();
    let classes = full_penetration();
    let s = [over_origin(550.0)];
    let run = |l: &BeamLayout, rho| physics_baseline(&s, &pop, &land, &classes, l, rho, BaselineMode::Integral);
    assert!(run(&BeamLayout::default(), 0.0).is_err());
    assert!(run(&layout(0.0, 10.0), 1.0).is_err());
    let mut two = BeamLayout::default();
    two.n_beams = 2;
    assert!(run(&two, 1.0).is_err());
}

#[test]
fn hanning_window_is_unit_gain_and_symmetric() {
    let w = hanning_window(11).unwrap();
    assert_eq!(w.len(), 11);
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    assert_eq!(w[0], 0.0);
    for i in 0..11 {
        assert!((w[i] - w[10 - i]).abs() < 1e-15);
    }
    // Peak tap: 1 / Σ sin²(πn/10) over n = 0..=10, which is 5.
    assert!((w[5] - 0.2).abs() < 1e-15);
    assert!(hanning_window(10).is_err());
    let flat = hanning_smooth(&[3.0; 20], 11).unwrap();
    assert!(flat.iter().all(|v| (v - 3.0).abs() < 1e-12));
    let spike: Vec<f64> = (0..21).map(|i| if i == 10 { 1.0 } else { 0.0 }).collect();
    let out = hanning_smooth(&spike, 11).unwrap();
    for (i, v) in out.iter().enumerate() {
        let k = i as isize - 10 + 5;
        let want = if (0..11).contains(&k) { w[k as usize] } else { 0.0 };
        assert!((v - want).abs() < 1e-15);
    }
}

fn lag1(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    let num: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    let den: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
    num / den
}

#[test]
fn white_residual_has_no_lag_one_correlation() {
    let cfg = ResidualConfig {
        phi: 0.0,
        ..Default::default()
    };
    let r = synthesize_residual(100_000, &[0], 1, &cfg, 3).unwrap();
    assert!(lag1(&r).abs() < 0.02);
}

#[test]
fn stationary_variance_matches_ar1() {
    let cfg = ResidualConfig {
        phi: 0.9,
        sigma: 2.0,
        ..Default::default()
    };
    let nodes = 4;
    let r = synthesize_residual(100_000, &vec![0; nodes], 1, &cfg, 5).unwrap();
    for i in 0..nodes {
        let x: Vec<f64> = r.iter().skip(i).step_by(nodes).copied().collect();
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        let want = 4.0 / (1.0 - 0.81);
        assert!((var / want - 1.0).abs() < 0.03, "node {i}: {var} vs {want}");
        assert!((lag1(&x) - 0.9).abs() < 0.01);
    }
}

#[test]
fn plane_factor_correlates_only_within_planes() {
    let cfg = ResidualConfig {
        phi: 0.5,
        sigma: 1.0,
        plane_weight: 0.6,
        ..Default::default()
    };
    let r = synthesize_residual(50_000, &[0, 0, 1], 1, &cfg, 9).unwrap();
    let col = |i: usize| -> Vec<f64> { r.iter().skip(i).step_by(3).copied().collect() };
    let corr = |a: &[f64], b: &[f64]| {
        let sab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let saa: f64 = a.iter().map(|x| x * x).sum();
        let sbb: f64 = b.iter().map(|x| x * x).sum();
        sab / (saa * sbb).sqrt()
    };
    let (a, b, c) = (col(0), col(1), col(2));
    assert!((corr(&a, &b) - 0.6).abs() < 0.02);
    assert!(corr(&a, &c).abs() < 0.02);
}

#[test]
fn residual_is_seeded_and_validated() {
    let cfg = ResidualConfig {
        burst_rate: 0.05,
        burst_magnitude: 5.0,
        ..Default::default()
    };
    let a = synthesize_residual(200, &[0, 1], 2, &cfg, 11).unwrap();
    assert_eq!(a, synthesize_residual(200, &[0, 1], 2, &cfg, 11).unwrap());
    assert_ne!(a, synthesize_residual(200, &[0, 1], 2, &cfg, 12).unwrap());
    assert_eq!(a.len(), 200 * 2 * 2);
    for phi in [1.0, -1.0, 1.5] {
        let bad = ResidualConfig {
            phi,
            ..Default::default()
        };
        assert!(matches!(
            synthesize_residual(10, &[0], 1, &bad, 0),
            Err(TrafficError::Unstable(_))
        ));
    }
}

#[test]
fn bursts_inflate_innovation_variance() {
    let (rate, mag) = (0.1, 4.0);
    let cfg = ResidualConfig {
        phi: 0.0,
        sigma: 1.0,
        burst_rate: rate,
        burst_magnitude: mag,
        ..Default::default()
    };
    let r = synthesize_residual(100_000, &[0], 1, &cfg, 2).unwrap();
    let var = r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64;
    let want = 1.0 - rate + rate * mag * mag;
    assert!((var / want - 1.0).abs() < 0.03, "{var} vs {want}");
}

#[test]
fn decompose_of_identical_arrays_is_zero() {
    let x = [1.5, 20.25, 0.0];
    assert_eq!(decompose(&x, &x).unwrap(), vec![0.0; 3]);
    assert!(decompose(&x, &x[..2]).is_err());
    assert!(recompose(&x, &x[..2]).is_err());
}

fn lattice() -> impl Strategy<Value = f64> {
    (-1e6f64..1e6).prop_map(quantize)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn decompose_recompose_is_exact(
        pairs in prop::collection::vec((lattice(), lattice()), 1..32),
    ) {
        let (x, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let r = decompose(&x, &p).unwrap();
        prop_assert_eq!(recompose(&r, &p).unwrap(), x.clone());
        let injected = decompose(&x, &p).unwrap();
        let total = recompose(&injected, &p).unwrap();
        prop_assert_eq!(decompose(&total, &p).unwrap(), injected);
    }
}

#[test]
fn quantum_grid_is_exact_for_sums() {
    let a = quantize(123.456789);
    let b = quantize(-0.000321);
    assert_eq!((a / TRAFFIC_QUANTUM).fract(), 0.0);
    assert_eq!((a + b) - a, b);
}

/// Circular orbit at 550 km: node (RAAN) and phase in degrees.
fn circular(sat_id: u32, raan: f64, inc: f64, anomaly: f64) -> TleRecord {
    let a = WGS84_A + 550.0;
    TleRecord {
        sat_id,
        name: None,
        epoch: 0.0,
        inclination: inc,
        raan,
        eccentricity: 0.0,
        arg_perigee: 0.0,
        mean_anomaly: anomaly,
        mean_motion: (MU / a.powi(3)).sqrt() * 86_400.0 / std::f64::consts::TAU,
        bstar: 0.0,
    }
}

fn states(tles: &[TleRecord], t: f64) -> Vec<EphemerisRecord> {
    let p = KeplerPropagator::new(0.0, false);
    tles.iter().map(|tle| p.state(tle, t).unwrap()).collect()
}

fn degree(edges: &[(usize, usize)], n: usize) -> Vec<usize> {
    let mut d = vec![0; n];
    for &(i, _) in edges {
        d[i] += 1;
    }
    d
}

#[test]
fn single_ring_has_two_intra_neighbours() {
    let tles: Vec<TleRecord> = (0..10).map(|j| circular(j, 40.0, 53.0, 36.0 * j as f64)).collect();
    let cfg = GraphConfig {
        mode: GraphMode::Plane,
        ..Default::default()
    };
    let g = build_graph(&states(&tles, 300.0), 0, &cfg).unwrap();
    assert!(g.plane.iter().all(|&p| p == 0));
    assert_eq!(degree(&g.intra, 10), vec![2; 10]);
    assert!(g.inter.is_empty());
    // Ring neighbours are the adjacent phases.
    for j in 0..10usize {
        assert!(g.intra.contains(&(j, (j + 1) % 10)));
        assert!(g.intra.contains(&(j, (j + 9) % 10)));
    }
}

#[test]
fn plane_mode_links_each_node_to_adjacent_planes() {
    let tles: Vec<TleRecord> = (0..3)
        .flat_map(|p| (0..6).map(move |j| circular(10 * p + j, 30.0 * p as f64, 53.0, 60.0 * j as f64)))
        .collect();
    let cfg = GraphConfig {
        mode: GraphMode::Plane,
        ..Default::default()
    };
    let g = build_graph(&states(&tles, 0.0), 0, &cfg).unwrap();
    assert_eq!(g.plane.iter().max(), Some(&2));
    let d = degree(&g.intra, 18);
    assert!(d.iter().all(|&x| x == 2));
    // Before symmetrization every node has one edge per adjacent plane.
    let out_inter = degree(&g.inter, 18);
    assert!(out_inter.iter().all(|&x| x >= 2));
}

#[test]
fn knn_out_degree_is_k() {
    let tles: Vec<TleRecord> = (0..2)
        .flat_map(|p| (0..10).map(move |j| circular(100 * (p + 1) + j, 20.0 * p as f64, 53.0, 36.0 * j as f64)))
        .collect();
    let s = states(&tles, 1234.0);
    for (i, nbrs) in knn_neighbors(&s, 4).iter().enumerate() {
        assert_eq!(nbrs.len(), 4);
        assert!(!nbrs.contains(&i));
    }
    let g = build_graph(&s, 0, &GraphConfig::default()).unwrap();
    for (i, nbrs) in knn_neighbors(&s, 4).iter().enumerate() {
        for &j in nbrs {
            let e = (i, j);
            assert!(g.intra.contains(&e) ^ g.inter.contains(&e));
            assert_eq!(g.intra.contains(&e), g.plane[i] == g.plane[j]);
        }
    }
}

#[test]
fn edge_sets_are_disjoint_on_random_slots() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for slot in 0..100 {
        let n_planes = rng.random_range(1..5);
        let tles: Vec<TleRecord> = (0..n_planes)
            .flat_map(|p| {
                let raan = rng.random_range(0.0..360.0);
                let per = rng.random_range(2..8);
                (0..per)
                    .map(|j| circular(100 * p + j, raan, 53.0, rng.random_range(0.0..360.0)))
                    .collect::<Vec<_>>()
            })
            .collect();
        if tles.len() < 2 {
            continue;
        }
        let mode = if slot % 2 == 0 {
            GraphMode::Knn
        } else {
            GraphMode::Plane
        };
        let cfg = GraphConfig {
            mode,
            ..Default::default()
        };
        let g = build_graph(&states(&tles, rng.random_range(0.0..6000.0)), slot, &cfg).unwrap();
        for a in &g.intra {
            assert!(!g.inter.contains(a));
            assert_ne!(a.0, a.1);
            assert!(g.intra.contains(&(a.1, a.0)));
        }
        for e in &g.inter {
            assert!(g.inter.contains(&(e.1, e.0)));
            assert_ne!(g.plane[e.0], g.plane[e.1]);
        }
    }
}

#[test]
fn graph_needs_two_satellites() {
    let s = states(&[circular(1, 0.0, 53.0, 0.0)], 0.0);
    assert!(build_graph(&s, 0, &GraphConfig::default()).is_err());
}
