//! Keplerian mean-element propagation with optional J2 secular drift.

use std::f64::consts::{PI, TAU};

use super::frames::{geodetic_to_ecef, gmst, GeodeticPoint};
use super::{norm, EphemerisRecord, OrbitalError, Result, TleRecord, Vec3, J2, MU, OMEGA_EARTH, WGS84_A};

const KEPLER_TOL: f64 = 1e-12;
const KEPLER_MAX_ITER: usize = 50;

/// Inertial (true-of-date, equinox-aligned) state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EciState {
    pub position: Vec3,
    pub velocity: Vec3,
}

impl EciState {
    /// Specific orbital energy v²/2 − μ/r, km²/s².
    pub fn energy(&self) -> f64 {
        let v = norm(&self.velocity);
        v * v / 2.0 - MU / norm(&self.position)
    }
}

pub trait Propagator {
    /// State at `t` seconds since the simulation epoch, Earth-fixed.
    fn state(&self, tle: &TleRecord, t: f64) -> Result<EphemerisRecord>;
}

/// `2π√(a³/μ)`, seconds.
pub fn orbital_period(a_km: f64) -> f64 {
    TAU * (a_km.powi(3) / MU).sqrt()
}

fn solve_kepler(m: f64, e: f64) -> Result<f64> {
    let m = m.rem_euclid(TAU);
    let mut ea = if e < 0.8 { m } else { PI };
    for _ in 0..KEPLER_MAX_ITER {
        let f = ea - e * ea.sin() - m;
        let step = f / (1.0 - e * ea.cos());
        ea -= step;
        if step.abs() < KEPLER_TOL {
            return Ok(ea);
        }
    }
    Err(OrbitalError::KeplerNonConvergence {
        mean_anomaly: m,
        eccentricity: e,
    })
}

fn rotate_z(v: &Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]
}

fn rotate_x(v: &Vec3, angle: f64) -> Vec3 {
    let (s, c) = angle.sin_cos();
    [v[0], c * v[1] - s * v[2], s * v[1] + c * v[2]]
}

#[derive(Clone, Copy, Debug)]
pub struct KeplerPropagator {
    /// Unix seconds of `t = 0`.
    pub sim_epoch: f64,
    pub j2: bool,
}

impl KeplerPropagator {
    pub fn new(sim_epoch: f64, j2: bool) -> Self {
        Self { sim_epoch, j2 }
    }

    pub fn semi_major_axis(tle: &TleRecord) -> f64 {
        let n = tle.mean_motion * TAU / 86_400.0;
        (MU / (n * n)).cbrt()
    }

    pub fn eci_state(&self, tle: &TleRecord, t: f64) -> Result<EciState> {
        tle.validate()?;
        let e = tle.eccentricity;
        let n = tle.mean_motion * TAU / 86_400.0;
        let a = Self::semi_major_axis(tle);
        let dt = self.sim_epoch + t - tle.epoch;
        let inc = tle.inclination.to_radians();
        let mut raan = tle.raan.to_radians();
        let mut argp = tle.arg_perigee.to_radians();
        if self.j2 {
            let p = a * (1.0 - e * e);
            let k = n * J2 * (WGS84_A / p).powi(2);
            raan += -1.5 * k * inc.cos() * dt;
            argp += 0.75 * k * (5.0 * inc.cos().powi(2) - 1.0) * dt;
        }
        let m = tle.mean_anomaly.to_radians() + n * dt;
        let ea = solve_kepler(m, e)?;
        let (se, ce) = ea.sin_cos();
        let root = (1.0 - e * e).sqrt();
        let denom = 1.0 - e * ce;
        let pos_pf = [a * (ce - e), a * root * se, 0.0];
        let vel_pf = [-n * a * se / denom, n * a * root * ce / denom, 0.0];
        let to_eci = |v: &Vec3| rotate_z(&rotate_x(&rotate_z(v, argp), inc), raan);
        Ok(EciState {
            position: to_eci(&pos_pf),
            velocity: to_eci(&vel_pf),
        })
    }

    pub fn eci_to_ecef(&self, s: &EciState, t: f64) -> (Vec3, Vec3) {
        let theta = gmst(self.sim_epoch + t);
        let r = rotate_z(&s.position, -theta);
        let v = rotate_z(&s.velocity, -theta);
        // v_ecef = R·v_eci − ω × r_ecef, ω = (0, 0, Ω_E)
        let v = [v[0] + OMEGA_EARTH * r[1], v[1] - OMEGA_EARTH * r[0], v[2]];
        (r, v)
    }
}

impl Propagator for KeplerPropagator {
    fn state(&self, tle: &TleRecord, t: f64) -> Result<EphemerisRecord> {
        let s = self.eci_state(tle, t)?;
        let (position, velocity) = self.eci_to_ecef(&s, t);
        Ok(EphemerisRecord {
            sat_id: tle.sat_id,
            t,
            position,
            velocity,
        })
    }
}

/// Circular two-body elements whose satellite sits exactly above `point`
/// (at `point.alt`) at unix time `t_pass`. `ascending` picks the northbound
/// or southbound crossing.
pub fn elements_over_point(
    sat_id: u32,
    point: &GeodeticPoint,
    inclination_deg: f64,
    t_pass: f64,
    epoch: f64,
    ascending: bool,
) -> Result<TleRecord> {
    let p = geodetic_to_ecef(point);
    let r = rotate_z(&p, gmst(t_pass));
    let a = norm(&r);
    let inc = inclination_deg.to_radians();
    let decl = (r[2] / a).asin();
    let su = decl.sin() / inc.sin();
    if !(-1.0..=1.0).contains(&su) {
        return Err(OrbitalError::Elements {
            sat_id,
            msg: format!("latitude {} unreachable at inclination {inclination_deg}", point.lat),
        });
    }
    let u = if ascending { su.asin() } else { PI - su.asin() };
    let alpha = r[1].atan2(r[0]);
    let raan = alpha - (inc.cos() * u.sin()).atan2(u.cos());
    let n = (MU / a.powi(3)).sqrt();
    let m0 = u - n * (t_pass - epoch);
    let rec = TleRecord {
        sat_id,
        name: None,
        epoch,
        inclination: inclination_deg,
        raan: raan.to_degrees().rem_euclid(360.0),
        eccentricity: 0.0,
        arg_perigee: 0.0,
        mean_anomaly: m0.to_degrees().rem_euclid(360.0),
        mean_motion: n * 86_400.0 / TAU,
        bstar: 0.0,
    };
    rec.validate()?;
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbital::ecef_to_geodetic;

    fn circular(a: f64) -> TleRecord {
        let n = (MU / a.powi(3)).sqrt();
        TleRecord {
            sat_id: 1,
            name: None,
            epoch: 0.0,
            inclination: 53.0,
            raan: 10.0,
            eccentricity: 0.0,
            arg_perigee: 0.0,
            mean_anomaly: 0.0,
            mean_motion: n * 86_400.0 / TAU,
            bstar: 0.0,
        }
    }

    #[test]
    fn kepler_solution_satisfies_equation() {
        for &e in &[0.0, 0.001, 0.02, 0.3] {
            for k in 0..16 {
                let m = k as f64 * 0.4;
                let ea = solve_kepler(m, e).unwrap();
                assert!((ea - e * ea.sin() - m.rem_euclid(TAU)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn circular_radius_constant() {
        let tle = circular(6928.0);
        let prop = KeplerPropagator::new(0.0, false);
        let period = orbital_period(6928.0);
        for k in 0..100 {
            let s = prop.eci_state(&tle, period * k as f64 / 100.0).unwrap();
            assert!((norm(&s.position) / 6928.0 - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn overhead_elements_place_satellite_at_zenith() {
        let pt = GeodeticPoint::new(12.0, -40.0, 550_000.0).unwrap();
        let tle = elements_over_point(7, &pt, 53.0, 1_000_000.0, 999_000.0, true).unwrap();
        let prop = KeplerPropagator::new(999_000.0, false);
        let s = prop.state(&tle, 1000.0).unwrap();
        let g = ecef_to_geodetic(&s.position);
        assert!((g.lat - 12.0).abs() < 1e-6, "{g:?}");
        assert!((g.lon + 40.0).abs() < 1e-6, "{g:?}");
        assert!((g.alt - 550_000.0).abs() < 1e-3);
    }
}
