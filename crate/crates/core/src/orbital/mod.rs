//! Orbital element sets, two-body propagation and Earth-fixed geometry.

mod ephemeris;
mod frames;
mod propagate;
mod tle;

pub use ephemeris::{read_ephemeris, write_ephemeris, EPHEMERIS_HEADER};
pub use frames::{
    doppler_shift, ecef_to_geodetic, enu, geodetic_to_ecef, gmst, julian_date, look_angles, wrap_lon, GeodeticPoint,
    LookAngles,
};
pub use propagate::{elements_over_point, orbital_period, EciState, KeplerPropagator, Propagator};
pub use tle::{format_tle, parse_tle, TleRecord};

use thiserror::Error;

/// Earth gravitational parameter, km³/s².
pub const MU: f64 = 398_600.4418;
/// Speed of light, m/s.
pub const C_LIGHT: f64 = 299_792_458.0;
/// Earth rotation rate, rad/s.
pub const OMEGA_EARTH: f64 = 7.292_115_0e-5;
/// WGS-84 semi-major axis, km.
pub const WGS84_A: f64 = 6378.137;
/// WGS-84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// WGS-84 semi-minor axis, km.
pub const WGS84_B: f64 = WGS84_A * (1.0 - WGS84_F);
/// Second zonal harmonic.
pub const J2: f64 = 1.082_626_68e-3;

pub type Vec3 = [f64; 3];

#[derive(Debug, Error)]
pub enum OrbitalError {
    #[error("line {line}: expected 69 columns, found {found}")]
    LineLength { line: usize, found: usize },
    #[error("line {line}: checksum mismatch (computed {computed}, stored {stored})")]
    Checksum { line: usize, computed: u32, stored: u32 },
    #[error("line {line}: cannot parse {field} from {text:?}")]
    Field {
        line: usize,
        field: &'static str,
        text: String,
    },
    #[error("line {line}: {msg}")]
    Structure { line: usize, msg: String },
    #[error("invalid elements for satellite {sat_id}: {msg}")]
    Elements { sat_id: u32, msg: String },
    #[error("Kepler's equation did not converge (M = {mean_anomaly}, e = {eccentricity})")]
    KeplerNonConvergence { mean_anomaly: f64, eccentricity: f64 },
    #[error("coincident points: slant range is zero")]
    ZeroRange,
    #[error("geodetic point out of range: {0}")]
    Range(String),
    #[error("ephemeris file: {0}")]
    Ephemeris(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, OrbitalError>;

/// Satellite state in the Earth-fixed frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EphemerisRecord {
    pub sat_id: u32,
    /// Seconds since the simulation epoch.
    pub t: f64,
    /// km
    pub position: Vec3,
    /// km/s
    pub velocity: Vec3,
}

pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Anything that yields the constellation state at a simulation time.
pub trait EphemerisSource {
    fn states_at(&self, t: f64) -> Result<Vec<EphemerisRecord>>;
}

/// Element sets driven through a propagator.
pub struct PropagatedSource<'a, P: Propagator> {
    pub tles: &'a [TleRecord],
    pub propagator: P,
}

impl<P: Propagator> EphemerisSource for PropagatedSource<'_, P> {
    fn states_at(&self, t: f64) -> Result<Vec<EphemerisRecord>> {
        self.tles.iter().map(|tle| self.propagator.state(tle, t)).collect()
    }
}

/// Pre-computed ephemeris rows, looked up by exact time (within 1 µs).
pub struct TabulatedSource {
    rows: Vec<EphemerisRecord>,
}

impl TabulatedSource {
    pub fn new(mut rows: Vec<EphemerisRecord>) -> Self {
        rows.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.sat_id.cmp(&b.sat_id)));
        Self { rows }
    }
}

impl EphemerisSource for TabulatedSource {
    fn states_at(&self, t: f64) -> Result<Vec<EphemerisRecord>> {
        let start = self.rows.partition_point(|r| r.t < t - 1e-6);
        let out: Vec<EphemerisRecord> = self.rows[start..]
            .iter()
            .take_while(|r| r.t <= t + 1e-6)
            .copied()
            .collect();
        if out.is_empty() {
            return Err(OrbitalError::Ephemeris(format!("no ephemeris rows at t = {t} s")));
        }
        Ok(out)
    }
}
