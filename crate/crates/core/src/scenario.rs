//! Self-contained synthetic scenarios for smoke tests and the learning gates:
//! a regional grid with one overhead pass, and a small Walker-style
//! constellation over global population and land-cover rasters.

use serde::{Deserialize, Serialize};

use crate::geo_data::{GeoError, RasterGrid, OCEAN, RURAL, URBAN};
use crate::orbital::{elements_over_point, GeodeticPoint, OrbitalError, TleRecord, MU, WGS84_A};
use crate::physics_tensor::GridSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyChannelConfig {
    pub n: usize,
    pub center_lat: f64,
    pub center_lon: f64,
    /// Grid cell edge, deg.
    pub cell_deg: f64,
    pub altitude_km: f64,
    pub inclination: f64,
    /// Unix seconds of simulation time zero.
    pub sim_epoch: f64,
    /// Simulation time of the zenith pass over the grid centroid, s.
    pub t_pass: f64,
    pub peak_rain: f64,
}

impl Default for ToyChannelConfig {
    fn default() -> Self {
        Self {
            n: 16,
            center_lat: 40.0,
            center_lon: 10.0,
            cell_deg: 0.1,
            altitude_km: 550.0,
            inclination: 53.0,
            sim_epoch: 1_704_067_200.0,
            t_pass: 100.0,
            peak_rain: 25.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ToyChannelScenario {
    pub grid: GridSpec,
    pub land: RasterGrid,
    pub rain: RasterGrid,
    pub tles: Vec<TleRecord>,
    pub sim_epoch: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Orbital(#[from] OrbitalError),
}

/// Land cover: ocean west of the centre meridian band, an urban disc near the
/// centre, rural elsewhere. Rain: a Gaussian cell north-east of the centre.
pub fn toy_channel_scenario(cfg: &ToyChannelConfig) -> Result<ToyChannelScenario, ScenarioError> {
    let half = cfg.n as f64 * cfg.cell_deg / 2.0;
    let grid = GridSpec {
        n_x: cfg.n,
        n_y: cfg.n,
        lat_min: cfg.center_lat - half,
        lat_max: cfg.center_lat + half,
        lon_min: cfg.center_lon - half,
        lon_max: cfg.center_lon + half,
    };
    let margin = 1.0;
    let cs = cfg.cell_deg / 2.0;
    let cols = ((2.0 * (half + margin)) / cs).round() as usize;
    let (xll, yll) = (cfg.center_lon - half - margin, cfg.center_lat - half - margin);
    let (lat0, lon0) = (cfg.center_lat, cfg.center_lon);
    let land = RasterGrid::from_fn(cols, cols, xll, yll, cs, |lat, lon| {
        let (dy, dx) = (lat - lat0, lon - lon0);
        if dx < -0.3 * half + 0.15 * dy {
            OCEAN as f64
        } else if (dx - 0.2 * half).hypot(dy + 0.1 * half) < 0.25 * half {
            URBAN as f64
        } else {
            RURAL as f64
        }
    })?;
    let rain = RasterGrid::from_fn(cols, cols, xll, yll, cs, |lat, lon| {
        let (dy, dx) = (lat - lat0 - 0.3 * half, lon - lon0 - 0.3 * half);
        cfg.peak_rain * (-(dx * dx + dy * dy) / (2.0 * (0.3 * half).powi(2))).exp()
    })?;
    let over = GeodeticPoint::new(lat0, lon0, cfg.altitude_km * 1000.0)?;
    let tle = elements_over_point(
        1,
        &over,
        cfg.inclination,
        cfg.sim_epoch + cfg.t_pass,
        cfg.sim_epoch,
        true,
    )?;
    Ok(ToyChannelScenario {
        grid,
        land,
        rain,
        tles: vec![tle],
        sim_epoch: cfg.sim_epoch,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyTrafficConfig {
    pub planes: usize,
    pub sats_per_plane: usize,
    pub altitude_km: f64,
    pub inclination: f64,
    /// RAAN step between planes, deg.
    pub raan_spacing: f64,
    /// Unix seconds of simulation time zero.
    pub sim_epoch: f64,
    /// Raster cell edge, deg.
    pub cell_deg: f64,
}

impl Default for ToyTrafficConfig {
    fn default() -> Self {
        Self {
            planes: 2,
            sats_per_plane: 10,
            altitude_km: 550.0,
            inclination: 53.0,
            raan_spacing: 20.0,
            sim_epoch: 1_704_067_200.0,
            cell_deg: 0.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ToyTrafficScenario {
    pub pop: RasterGrid,
    pub land: RasterGrid,
    pub tles: Vec<TleRecord>,
    pub sim_epoch: f64,
}

const CITIES: [(f64, f64); 6] = [
    (40.0, -75.0),
    (35.0, 135.0),
    (51.0, 0.0),
    (-23.0, -46.0),
    (28.0, 77.0),
    (30.0, 31.0),
];

fn land_score(lat: f64, lon: f64) -> f64 {
    let (p, l) = (lat.to_radians(), lon.to_radians());
    (2.0 * l + 0.5).sin() * p.cos() + 0.5 * (3.0 * p).sin()
}

fn toy_density(lat: f64, lon: f64) -> f64 {
    let s = land_score(lat, lon);
    if s <= 0.0 {
        return 0.0;
    }
    let cities: f64 = CITIES
        .iter()
        .map(|&(la, lo)| {
            let dlon = (lon - lo + 180.0).rem_euclid(360.0) - 180.0;
            2000.0 * (-((lat - la).powi(2) + dlon.powi(2)) / 8.0).exp()
        })
        .sum();
    20.0 + 200.0 * s * s + cities
}

/// Global rasters: land where a smooth score is positive, urban where the
/// density exceeds 500 km⁻², six Gaussian population centres. Satellites are
/// evenly phased within each circular plane, with a half-slot offset
/// between neighbouring planes.
pub fn toy_traffic_scenario(cfg: &ToyTrafficConfig) -> Result<ToyTrafficScenario, ScenarioError> {
    let cs = cfg.cell_deg;
    let (cols, rows) = ((360.0 / cs).round() as usize, (180.0 / cs).round() as usize);
    let pop = RasterGrid::from_fn(cols, rows, -180.0, -90.0, cs, toy_density)?;
    let land = RasterGrid::from_fn(cols, rows, -180.0, -90.0, cs, |lat, lon| {
        if land_score(lat, lon) <= 0.0 {
            OCEAN as f64
        } else if toy_density(lat, lon) > 500.0 {
            URBAN as f64
        } else {
            RURAL as f64
        }
    })?;
    let a = WGS84_A + cfg.altitude_km;
    let mean_motion = (MU / a.powi(3)).sqrt() * 86_400.0 / std::f64::consts::TAU;
    let step = 360.0 / cfg.sats_per_plane.max(1) as f64;
    let mut tles = Vec::with_capacity(cfg.planes * cfg.sats_per_plane);
    for p in 0..cfg.planes {
        for j in 0..cfg.sats_per_plane {
            let tle = TleRecord {
                sat_id: (100 * (p + 1) + j) as u32,
                name: None,
                epoch: cfg.sim_epoch,
                inclination: cfg.inclination,
                raan: (p as f64 * cfg.raan_spacing).rem_euclid(360.0),
                eccentricity: 0.0,
                arg_perigee: 0.0,
                mean_anomaly: (j as f64 * step + p as f64 * step / 2.0).rem_euclid(360.0),
                mean_motion,
                bstar: 0.0,
            };
            tle.validate()?;
            tles.push(tle);
        }
    }
    Ok(ToyTrafficScenario {
        pop,
        land,
        tles,
        sim_epoch: cfg.sim_epoch,
    })
}
