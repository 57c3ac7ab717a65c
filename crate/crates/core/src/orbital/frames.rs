//! WGS-84 conversions, topocentric look angles, Doppler and sidereal time.

use super::{dot, norm, sub, OrbitalError, Result, Vec3, C_LIGHT, WGS84_A, WGS84_F};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeodeticPoint {
    /// deg
    pub lat: f64,
    /// deg
    pub lon: f64,
    /// m
    pub alt: f64,
}

impl GeodeticPoint {
    pub fn new(lat: f64, lon: f64, alt: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat) || !lon.is_finite() || !alt.is_finite() {
            return Err(OrbitalError::Range(format!("lat {lat}, lon {lon}, alt {alt}")));
        }
        Ok(Self {
            lat,
            lon: wrap_lon(lon),
            alt,
        })
    }
}

/// Wraps to [−180, 180).
pub fn wrap_lon(lon: f64) -> f64 {
    let w = (lon + 180.0).rem_euclid(360.0) - 180.0;
    if w >= 180.0 {
        w - 360.0
    } else {
        w
    }
}

fn e2() -> f64 {
    WGS84_F * (2.0 - WGS84_F)
}

pub fn geodetic_to_ecef(p: &GeodeticPoint) -> Vec3 {
    let (phi, lam) = (p.lat.to_radians(), p.lon.to_radians());
    let h = p.alt / 1000.0;
    let n = WGS84_A / (1.0 - e2() * phi.sin().powi(2)).sqrt();
    [
        (n + h) * phi.cos() * lam.cos(),
        (n + h) * phi.cos() * lam.sin(),
        (n * (1.0 - e2()) + h) * phi.sin(),
    ]
}

/// Fixed-point iteration on latitude; converges to machine precision in a
/// handful of steps for terrestrial and LEO altitudes.
pub fn ecef_to_geodetic(r: &Vec3) -> GeodeticPoint {
    let e2 = e2();
    let p = r[0].hypot(r[1]);
    let lon = if p == 0.0 { 0.0 } else { r[1].atan2(r[0]) };
    let mut lat = r[2].atan2(p * (1.0 - e2));
    let mut h = 0.0;
    for _ in 0..30 {
        let s = lat.sin();
        let n = WGS84_A / (1.0 - e2 * s * s).sqrt();
        h = p * lat.cos() + r[2] * s - n * (1.0 - e2 * s * s);
        let next = r[2].atan2(p * (1.0 - e2 * n / (n + h)));
        let done = (next - lat).abs() < 1e-15;
        lat = next;
        if done {
            break;
        }
    }
    let s = lat.sin();
    let n = WGS84_A / (1.0 - e2 * s * s).sqrt();
    h = if p > 0.0 || r[2] != 0.0 {
        p * lat.cos() + r[2] * s - n * (1.0 - e2 * s * s)
    } else {
        h
    };
    GeodeticPoint {
        lat: lat.to_degrees(),
        lon: wrap_lon(lon.to_degrees()),
        alt: h * 1000.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LookAngles {
    /// deg in [0, 360)
    pub azimuth: f64,
    /// deg in [−90, 90]
    pub elevation: f64,
    /// km
    pub slant_range: f64,
}

/// Local East-North-Up components of `d` at geodetic `(lat, lon)`.
pub fn enu(d: &Vec3, lat: f64, lon: f64) -> Vec3 {
    let (sp, cp) = lat.to_radians().sin_cos();
    let (sl, cl) = lon.to_radians().sin_cos();
    [
        -sl * d[0] + cl * d[1],
        -sp * cl * d[0] - sp * sl * d[1] + cp * d[2],
        cp * cl * d[0] + cp * sl * d[1] + sp * d[2],
    ]
}

pub fn look_angles(sat: &Vec3, ground: &Vec3) -> Result<LookAngles> {
    let d = sub(sat, ground);
    let slant_range = norm(&d);
    if slant_range == 0.0 {
        return Err(OrbitalError::ZeroRange);
    }
    let g = ecef_to_geodetic(ground);
    let [e, n, u] = enu(&d, g.lat, g.lon);
    let elevation = u.atan2(e.hypot(n)).to_degrees();
    let azimuth = e.atan2(n).to_degrees().rem_euclid(360.0);
    Ok(LookAngles {
        azimuth: if azimuth >= 360.0 { 0.0 } else { azimuth },
        elevation,
        slant_range,
    })
}

/// `(f_c/c)·vᵀu` with `u` the unit vector from satellite to ground; positive
/// when the satellite approaches.
pub fn doppler_shift(sat_pos: &Vec3, sat_vel: &Vec3, ground: &Vec3, f_c: f64) -> Result<f64> {
    if f_c <= 0.0 {
        return Err(OrbitalError::Range(format!("carrier frequency {f_c} Hz")));
    }
    let d = sub(ground, sat_pos);
    let range = norm(&d);
    if range == 0.0 {
        return Err(OrbitalError::ZeroRange);
    }
    let radial_kms = dot(sat_vel, &d) / range;
    Ok(f_c / C_LIGHT * radial_kms * 1000.0)
}

pub fn julian_date(unix_seconds: f64) -> f64 {
    unix_seconds / 86_400.0 + 2_440_587.5
}

/// Greenwich mean sidereal time (rad) with UT1 ≈ UTC.
pub fn gmst(unix_seconds: f64) -> f64 {
    let t = (julian_date(unix_seconds) - 2_451_545.0) / 36_525.0;
    let secs = 67_310.548_41 + (876_600.0 * 3600.0 + 8_640_184.812_866) * t + 0.093_104 * t * t - 6.2e-6 * t * t * t;
    (secs * std::f64::consts::TAU / 86_400.0).rem_euclid(std::f64::consts::TAU)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbital::WGS84_B;

    #[test]
    fn equator_and_pole() {
        let r = geodetic_to_ecef(&GeodeticPoint::new(0.0, 0.0, 0.0).unwrap());
        assert_eq!(r, [WGS84_A, 0.0, 0.0]);
        let r = geodetic_to_ecef(&GeodeticPoint::new(90.0, 37.0, 0.0).unwrap());
        assert!(r[0].abs() < 1e-9 && r[1].abs() < 1e-9);
        assert!((r[2] - 6356.7523).abs() < 1e-4);
        assert!((r[2] - WGS84_B).abs() < 1e-9);
    }

    #[test]
    fn zenith_and_horizon() {
        let g = geodetic_to_ecef(&GeodeticPoint::new(30.0, 40.0, 0.0).unwrap());
        let s = geodetic_to_ecef(&GeodeticPoint::new(30.0, 40.0, 550_000.0).unwrap());
        let la = look_angles(&s, &g).unwrap();
        assert!((la.elevation - 90.0).abs() < 1e-9);
        assert!((la.slant_range - 550.0).abs() < 1e-9);
        let (sl, cl) = 40f64.to_radians().sin_cos();
        let east = [-sl * 100.0, cl * 100.0, 0.0];
        let h = [g[0] + east[0], g[1] + east[1], g[2] + east[2]];
        let la = look_angles(&h, &g).unwrap();
        assert!(la.elevation.abs() < 1e-9);
        assert!((la.azimuth - 90.0).abs() < 1e-9);
    }

    #[test]
    fn coincident_points_rejected() {
        let g = [WGS84_A, 0.0, 0.0];
        assert!(matches!(look_angles(&g, &g), Err(OrbitalError::ZeroRange)));
    }

    #[test]
    fn radial_doppler_golden() {
        let ground = [WGS84_A, 0.0, 0.0];
        let sat = [WGS84_A + 550.0, 0.0, 0.0];
        let f = doppler_shift(&sat, &[-7.5, 0.0, 0.0], &ground, 12e9).unwrap();
        assert!((f - 300_207.7).abs() < 1.0, "{f}");
        let f2 = doppler_shift(&sat, &[7.5, 0.0, 0.0], &ground, 12e9).unwrap();
        assert_eq!(f, -f2);
        let f0 = doppler_shift(&sat, &[0.0, 7.5, 0.0], &ground, 12e9).unwrap();
        assert_eq!(f0, 0.0);
    }

    #[test]
    fn lon_wraps_into_half_open_range() {
        assert_eq!(wrap_lon(180.0), -180.0);
        assert_eq!(wrap_lon(-180.0), -180.0);
        assert!((wrap_lon(370.0) - 10.0).abs() < 1e-12);
    }
}
