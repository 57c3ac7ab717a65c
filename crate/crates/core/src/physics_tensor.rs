//! Per-slot six-channel physics prior over the ground grid.
//!
//! Channel order (0-based): 0 FSPL dB, 1 antenna gain dBi, 2 rain
//! attenuation dB, 3 Doppler Hz, 4 land-cover code, 5 scintillation σ (dB).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo_data::{ClassTable, GeoError, RasterGrid, OCEAN};
use crate::orbital::{
    doppler_shift, geodetic_to_ecef, look_angles, sub, wrap_lon, EphemerisRecord, GeodeticPoint, OrbitalError, Vec3,
    C_LIGHT,
};

pub const N_PHYS: usize = 6;
pub const CH_FSPL: usize = 0;
pub const CH_GAIN: usize = 1;
pub const CH_RAIN: usize = 2;
pub const CH_DOPPLER: usize = 3;
pub const CH_LAND: usize = 4;
pub const CH_SCINT: usize = 5;

#[derive(Debug, Error)]
pub enum PhysicsError {
    #[error("{0} must be positive, got {1}")]
    NonPositive(&'static str, f64),
    #[error("elevation {0}° is at or below the horizon")]
    BelowHorizon(f64),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("physics tensor file: {0}")]
    Format(String),
    #[error(transparent)]
    Orbital(#[from] OrbitalError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PhysicsError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_x: usize,
    pub n_y: usize,
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_x == 0 || self.n_y == 0 {
            return Err(PhysicsError::Params("grid dimensions must be ≥ 1".into()));
        }
        if !(self.lat_min < self.lat_max && self.lon_min < self.lon_max) {
            return Err(PhysicsError::Params("empty bounding box".into()));
        }
        if self.lat_min < -90.0 || self.lat_max > 90.0 {
            return Err(PhysicsError::Params("latitude bounds outside [−90, 90]".into()));
        }
        Ok(())
    }

    /// Cell center; `i` runs east along longitude, `j` north along latitude.
    pub fn center(&self, i: usize, j: usize) -> GeodeticPoint {
        let dlon = (self.lon_max - self.lon_min) / self.n_x as f64;
        let dlat = (self.lat_max - self.lat_min) / self.n_y as f64;
        GeodeticPoint {
            lat: self.lat_min + (j as f64 + 0.5) * dlat,
            lon: wrap_lon(self.lon_min + (i as f64 + 0.5) * dlon),
            alt: 0.0,
        }
    }

    pub fn centroid(&self) -> GeodeticPoint {
        GeodeticPoint {
            lat: (self.lat_min + self.lat_max) / 2.0,
            lon: wrap_lon((self.lon_min + self.lon_max) / 2.0),
            alt: 0.0,
        }
    }

    pub fn cells(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn cell_ecef(&self) -> Vec<Vec3> {
        let mut out = Vec::with_capacity(self.cells());
        for i in 0..self.n_x {
            for j in 0..self.n_y {
                out.push(geodetic_to_ecef(&self.center(i, j)));
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AntennaPattern {
    pub g_max: f64,
    pub psi_3db: f64,
    pub floor_db: f64,
}

impl Default for AntennaPattern {
    fn default() -> Self {
        Self {
            g_max: 38.0,
            psi_3db: 8.0,
            floor_db: 20.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RainModelParams {
    pub k_coef: f64,
    pub alpha_coef: f64,
    pub rain_height: f64,
    pub station_height: f64,
}

/// Power-law pair for circular polarization from the horizontal/vertical
/// coefficients (polarization tilt 45°).
pub fn circular_rain_coefficients(k_h: f64, alpha_h: f64, k_v: f64, alpha_v: f64) -> (f64, f64) {
    let k = (k_h + k_v) / 2.0;
    (k, (k_h * alpha_h + k_v * alpha_v) / (2.0 * k))
}

/// Horizontal and vertical coefficients at 12 GHz.
pub const RAIN_12GHZ_H: (f64, f64) = (0.02386, 1.1825);
pub const RAIN_12GHZ_V: (f64, f64) = (0.02455, 1.1216);

impl Default for RainModelParams {
    fn default() -> Self {
        let (k, a) = circular_rain_coefficients(RAIN_12GHZ_H.0, RAIN_12GHZ_H.1, RAIN_12GHZ_V.0, RAIN_12GHZ_V.1);
        Self {
            k_coef: k,
            alpha_coef: a,
            rain_height: 4.0,
            station_height: 0.0,
        }
    }
}

impl RainModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_coef > 0.0) {
            return Err(PhysicsError::NonPositive("k_coef", self.k_coef));
        }
        if !(self.alpha_coef > 0.5 && self.alpha_coef < 2.0) {
            return Err(PhysicsError::Params(format!(
                "alpha_coef {} outside (0.5, 2)",
                self.alpha_coef
            )));
        }
        if !(self.rain_height > self.station_height) {
            return Err(PhysicsError::Params("rain height must exceed station height".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScintParams {
    pub sigma_ref: f64,
    pub freq_exp: f64,
    pub elev_exp: f64,
}

impl Default for ScintParams {
    fn default() -> Self {
        Self {
            sigma_ref: 0.2,
            freq_exp: 7.0 / 12.0,
            elev_exp: 1.2,
        }
    }
}

/// `20·log10(4π·D·f_c/c)` with `D` in km.
pub fn fspl_db(d_km: f64, f_c: f64) -> Result<f64> {
    if !(d_km > 0.0) {
        return Err(PhysicsError::NonPositive("slant range", d_km));
    }
    if !(f_c > 0.0) {
        return Err(PhysicsError::NonPositive("carrier frequency", f_c));
    }
    Ok(20.0 * (4.0 * std::f64::consts::PI * d_km * 1000.0 * f_c / C_LIGHT).log10())
}

/// Off-boresight angle from azimuth/elevation offsets, deg.
pub fn off_boresight(theta: f64, phi: f64) -> f64 {
    (theta.to_radians().cos() * phi.to_radians().cos())
        .clamp(-1.0, 1.0)
        .acos()
        .to_degrees()
}

/// `g_max − min(12·(ψ/ψ_3dB)², floor_db)`.
pub fn antenna_gain_db(theta: f64, phi: f64, pattern: &AntennaPattern) -> f64 {
    let psi = off_boresight(theta, phi);
    pattern.g_max - (12.0 * (psi / pattern.psi_3db).powi(2)).min(pattern.floor_db)
}

/// `k·R^α·L_eff` with `L_eff = min((h_r − h_s)/sin ε, 50 km)`.
pub fn rain_attenuation_db(rain_rate: f64, elevation: f64, p: &RainModelParams) -> Result<f64> {
    if !(elevation > 0.0) {
        return Err(PhysicsError::BelowHorizon(elevation));
    }
    if rain_rate < 0.0 {
        return Err(PhysicsError::Params(format!("negative rain rate {rain_rate}")));
    }
    let l_eff = ((p.rain_height - p.station_height) / elevation.to_radians().sin()).min(50.0);
    Ok(p.k_coef * rain_rate.powf(p.alpha_coef) * l_eff)
}

/// `σ_ref·(f_c/12 GHz)^a / sin(ε)^b`.
pub fn scintillation_index(elevation: f64, f_c: f64, p: &ScintParams) -> Result<f64> {
    if !(elevation > 0.0) {
        return Err(PhysicsError::BelowHorizon(elevation));
    }
    if !(f_c > 0.0) {
        return Err(PhysicsError::NonPositive("carrier frequency", f_c));
    }
    Ok(p.sigma_ref * (f_c / 12e9).powf(p.freq_exp) / elevation.min(90.0).to_radians().sin().powf(p.elev_exp))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsParams {
    pub f_c: f64,
    pub antenna: AntennaPattern,
    pub rain: RainModelParams,
    pub scint: ScintParams,
    /// Cells below this elevation are masked; their rain and scintillation
    /// channels are evaluated at this elevation.
    pub min_elevation: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            f_c: 12e9,
            antenna: AntennaPattern::default(),
            rain: RainModelParams::default(),
            scint: ScintParams::default(),
            min_elevation: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhysicsTensor {
    pub n_x: usize,
    pub n_y: usize,
    /// `(x, y, channel)` row-major.
    pub values: Vec<f64>,
    pub slot: u64,
    pub sat_id: u32,
    pub slant_range_km: Vec<f64>,
    pub elevation_deg: Vec<f64>,
    /// True where the cell sees the satellite below `min_elevation`.
    pub low_elevation: Vec<bool>,
    /// True when every cell is below `min_elevation`.
    pub flagged: bool,
}

impl PhysicsTensor {
    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.values[(i * self.n_y + j) * N_PHYS + c]
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.values.iter().skip(c).step_by(N_PHYS).copied().collect()
    }
}

/// Index of the record with the highest elevation at `centroid`, ties going
/// to the lower sat_id.
pub fn dominant_satellite(ephs: &[EphemerisRecord], centroid: &Vec3) -> Result<Option<(usize, f64)>> {
    let mut best: Option<(usize, f64)> = None;
    for (k, e) in ephs.iter().enumerate() {
        let el = look_angles(&e.position, centroid)?.elevation;
        let better = match best {
            None => true,
            Some((b, bel)) => el > bel || (el == bel && e.sat_id < ephs[b].sat_id),
        };
        if better {
            best = Some((k, el));
        }
    }
    Ok(best)
}

/// Orthonormal frame around the boresight direction `b`.
fn boresight_frame(b: &Vec3) -> (Vec3, Vec3) {
    let helper = if b[2].abs() < 0.9 {
        [0.0, 0.0, 1.0]
    } else {
        [1.0, 0.0, 0.0]
    };
    let cross = |u: &Vec3, v: &Vec3| {
        [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ]
    };
    let e1 = cross(b, &helper);
    let n1 = (e1[0] * e1[0] + e1[1] * e1[1] + e1[2] * e1[2]).sqrt();
    let e1 = [e1[0] / n1, e1[1] / n1, e1[2] / n1];
    let e2 = cross(b, &e1);
    (e1, e2)
}

/// Azimuth/elevation offsets (deg) of direction `d` relative to boresight.
pub fn beam_offsets(boresight: &Vec3, d: &Vec3) -> (f64, f64) {
    let nb = (boresight[0].powi(2) + boresight[1].powi(2) + boresight[2].powi(2)).sqrt();
    let b = [boresight[0] / nb, boresight[1] / nb, boresight[2] / nb];
    let (e1, e2) = boresight_frame(&b);
    let dot = |u: &Vec3, v: &Vec3| u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    let (x1, x2, x3) = (dot(d, &e1), dot(d, &e2), dot(d, &b));
    let theta = x1.atan2(x3);
    let phi = x2.atan2(x1.hypot(x3));
    (theta.to_degrees(), phi.to_degrees())
}

pub struct Rasters<'a> {
    pub land: &'a RasterGrid,
    pub rain: &'a RasterGrid,
}

/// Fills all six channels for one slot. The beam boresight points at the
/// grid centroid.
pub fn build_physics_tensor(
    grid: &GridSpec,
    eph: &EphemerisRecord,
    slot: u64,
    rasters: &Rasters<'_>,
    classes: &ClassTable,
    params: &PhysicsParams,
) -> Result<PhysicsTensor> {
    grid.validate()?;
    params.rain.validate()?;
    let centroid = geodetic_to_ecef(&grid.centroid());
    let boresight = sub(&centroid, &eph.position);
    let cells = grid.cell_ecef();
    let mut values = vec![0.0; cells.len() * N_PHYS];
    let mut slant = Vec::with_capacity(cells.len());
    let mut elev = Vec::with_capacity(cells.len());
    let mut low = Vec::with_capacity(cells.len());
    for (idx, cell) in cells.iter().enumerate() {
        let (i, j) = (idx / grid.n_y, idx % grid.n_y);
        let center = grid.center(i, j);
        let la = look_angles(&eph.position, cell)?;
        let eps = la.elevation.max(params.min_elevation);
        let (theta, phi) = beam_offsets(&boresight, &sub(cell, &eph.position));
        let rain_v = rasters.rain.sample_bilinear(center.lat, center.lon)?;
        let rain_rate = if rasters.rain.is_nodata(rain_v) {
            0.0
        } else {
            rain_v.max(0.0)
        };
        let land_v = rasters.land.sample_nearest(center.lat, center.lon)?;
        let code = classes.code_of(rasters.land, land_v, OCEAN)?;
        let out = &mut values[idx * N_PHYS..(idx + 1) * N_PHYS];
        out[CH_FSPL] = fspl_db(la.slant_range, params.f_c)?;
        out[CH_GAIN] = antenna_gain_db(theta, phi, &params.antenna);
        out[CH_RAIN] = rain_attenuation_db(rain_rate, eps, &params.rain)?;
        out[CH_DOPPLER] = doppler_shift(&eph.position, &eph.velocity, cell, params.f_c)?;
        out[CH_LAND] = code as f64;
        out[CH_SCINT] = scintillation_index(eps, params.f_c, &params.scint)?;
        slant.push(la.slant_range);
        elev.push(la.elevation);
        low.push(la.elevation < params.min_elevation);
    }
    let flagged = low.iter().all(|&b| b);
    if flagged {
        log::warn!(
            "slot {slot}: satellite {} below minimum elevation over the whole grid",
            eph.sat_id
        );
    }
    Ok(PhysicsTensor {
        n_x: grid.n_x,
        n_y: grid.n_y,
        values,
        slot,
        sat_id: eph.sat_id,
        slant_range_km: slant,
        elevation_deg: elev,
        low_elevation: low,
        flagged,
    })
}

/// Per-channel affine normalization fitted on the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: [f64; N_PHYS],
    pub std: [f64; N_PHYS],
}

impl Normalization {
    pub fn fit<'a>(tensors: impl IntoIterator<Item = &'a PhysicsTensor>) -> Self {
        let mut sum = [0.0; N_PHYS];
        let mut sq = [0.0; N_PHYS];
        let mut n = 0usize;
        let all: Vec<&PhysicsTensor> = tensors.into_iter().collect();
        for t in &all {
            for cell in t.values.chunks(N_PHYS) {
                for c in 0..N_PHYS {
                    sum[c] += cell[c];
                }
                n += 1;
            }
        }
        let mean = sum.map(|s| s / n.max(1) as f64);
        for t in &all {
            for cell in t.values.chunks(N_PHYS) {
                for c in 0..N_PHYS {
                    sq[c] += (cell[c] - mean[c]).powi(2);
                }
            }
        }
        let std = sq.map(|s| {
            let sd = (s / n.max(1) as f64).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        });
        Self { mean, std }
    }

    pub fn identity() -> Self {
        Self {
            mean: [0.0; N_PHYS],
            std: [1.0; N_PHYS],
        }
    }

    /// Normalized copy of the tensor values in the same layout.
    pub fn apply(&self, t: &PhysicsTensor) -> Vec<f64> {
        t.values
            .iter()
            .enumerate()
            .map(|(k, v)| (v - self.mean[k % N_PHYS]) / self.std[k % N_PHYS])
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicsSidecar {
    pub shape: [usize; 3],
    pub slot: u64,
    pub sat_id: u32,
    pub normalization: Option<Normalization>,
}

/// Writes the raw values as little-endian f64 plus a JSON sidecar.
pub fn save_physics_tensor(
    t: &PhysicsTensor,
    normalization: Option<&Normalization>,
    bin: &Path,
    sidecar: &Path,
) -> Result<()> {
    let bytes: Vec<u8> = t.values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(bin, bytes)?;
    let meta = PhysicsSidecar {
        shape: [t.n_x, t.n_y, N_PHYS],
        slot: t.slot,
        sat_id: t.sat_id,
        normalization: normalization.cloned(),
    };
    fs::write(sidecar, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Reads values and sidecar; auxiliary geometry is not stored and comes
/// back empty.
pub fn load_physics_tensor(bin: &Path, sidecar: &Path) -> Result<(PhysicsTensor, PhysicsSidecar)> {
    let meta: PhysicsSidecar = serde_json::from_str(&fs::read_to_string(sidecar)?)?;
    let bytes = fs::read(bin)?;
    let n = meta.shape.iter().product::<usize>();
    if bytes.len() != n * 8 || meta.shape[2] != N_PHYS {
        return Err(PhysicsError::Format(format!(
            "{} bytes for shape {:?}",
            bytes.len(),
            meta.shape
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let t = PhysicsTensor {
        n_x: meta.shape[0],
        n_y: meta.shape[1],
        values,
        slot: meta.slot,
        sat_id: meta.sat_id,
        slant_range_km: Vec::new(),
        elevation_deg: Vec::new(),
        low_elevation: Vec::new(),
        flagged: false,
    };
    Ok((t, meta))
}
