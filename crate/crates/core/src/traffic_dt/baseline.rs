//! Deterministic per-beam demand from footprint geometry and population.

use serde::{Deserialize, Serialize};

use super::{Result, TrafficError};
use crate::geo_data::{ClassTable, RasterGrid, OCEAN};
use crate::orbital::{dot, ecef_to_geodetic, norm, EphemerisRecord, Vec3, WGS84_A, WGS84_B, WGS84_F};

/// Traffic values are kept on multiples of this step (Mbps), so sums and
/// differences of baseline and residual are exact in `f64`.
pub const TRAFFIC_QUANTUM: f64 = 1.0 / 1_048_576.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamLayout {
    pub n_beams: usize,
    /// Boresight tilt from nadir per beam, `[along-track, cross-track]` deg.
    pub offsets: Vec<[f64; 2]>,
    /// Cone half-angle about the boresight, deg.
    pub half_width: f64,
    /// deg
    pub min_elevation: f64,
}

impl Default for BeamLayout {
    fn default() -> Self {
        Self {
            n_beams: 1,
            offsets: vec![[0.0, 0.0]],
            half_width: 45.0,
            min_elevation: 25.0,
        }
    }
}

impl BeamLayout {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrafficError::Config(format!("beam layout: {m}")));
        if self.n_beams == 0 {
            return bad("n_beams must be at least 1".into());
        }
        if self.offsets.len() != self.n_beams {
            return bad(format!("{} offsets for {} beams", self.offsets.len(), self.n_beams));
        }
        if !(self.half_width > 0.0 && self.half_width < 90.0) {
            return bad(format!("half-width {}", self.half_width));
        }
        if !(0.0..90.0).contains(&self.min_elevation) {
            return bad(format!("min elevation {}", self.min_elevation));
        }
        if self
            .offsets
            .iter()
            .flatten()
            .any(|o| !(o.abs() + self.half_width < 90.0))
        {
            return bad("boresight tilt plus half-width must stay below 90 deg".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    /// Footprint integral of served population.
    #[default]
    Integral,
    /// Peak served density in a 0.1° window around the beam centre.
    PeakPool,
}

fn normalize(v: Vec3) -> Vec3 {
    let n = norm(&v);
    [v[0] / n, v[1] / n, v[2] / n]
}

fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Unit boresight of a beam tilted by `offset` from geocentric nadir, with
/// along-track taken from the velocity.
pub fn beam_boresight(state: &EphemerisRecord, offset: [f64; 2]) -> Vec3 {
    let z = normalize([-state.position[0], -state.position[1], -state.position[2]]);
    let v = state.velocity;
    let along = dot(&v, &z);
    let x = [v[0] - along * z[0], v[1] - along * z[1], v[2] - along * z[2]];
    let x = if norm(&x) > 0.0 {
        normalize(x)
    } else {
        normalize(cross(&z, &[0.0, 0.0, 1.0]))
    };
    let y = cross(&z, &x);
    let (ta, tc) = (offset[0].to_radians().tan(), offset[1].to_radians().tan());
    normalize([
        z[0] + ta * x[0] + tc * y[0],
        z[1] + ta * x[1] + tc * y[1],
        z[2] + ta * x[2] + tc * y[2],
    ])
}

/// First intersection of a ray with the WGS-84 ellipsoid.
fn ray_ellipsoid(origin: &Vec3, dir: &Vec3) -> Option<Vec3> {
    let p = [origin[0] / WGS84_A, origin[1] / WGS84_A, origin[2] / WGS84_B];
    let d = [dir[0] / WGS84_A, dir[1] / WGS84_A, dir[2] / WGS84_B];
    let (a, b, c) = (dot(&d, &d), 2.0 * dot(&p, &d), dot(&p, &p) - 1.0);
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let t = (-b - disc.sqrt()) / (2.0 * a);
    (t > 0.0).then(|| [origin[0] + t * dir[0], origin[1] + t * dir[1], origin[2] + t * dir[2]])
}

fn authalic_q(lat_deg: f64) -> f64 {
    let e = (WGS84_F * (2.0 - WGS84_F)).sqrt();
    let s = lat_deg.to_radians().sin();
    s / (1.0 - e * e * s * s) + ((1.0 + e * s) / (1.0 - e * s)).ln() / (2.0 * e)
}

/// Area of the ellipsoidal quadrangle between two latitudes spanning
/// `dlon` degrees of longitude, km².
pub fn ellipsoid_cell_area(lat_south: f64, lat_north: f64, dlon: f64) -> f64 {
    0.5 * WGS84_B * WGS84_B * dlon.to_radians() * (authalic_q(lat_north) - authalic_q(lat_south))
}

/// Raster cells that overlap a lat/lon box, with longitude wrap-around.
struct CellBox {
    rows: std::ops::RangeInclusive<usize>,
    cols: Vec<usize>,
}

fn cell_box(r: &RasterGrid, lat_lo: f64, lat_hi: f64, lon_lo: f64, lon_hi: f64) -> Option<CellBox> {
    let cs = r.cell_size;
    let top = r.yll + r.n_rows as f64 * cs;
    let (lat_lo, lat_hi) = (lat_lo.max(r.yll), lat_hi.min(top));
    if lat_lo > lat_hi {
        return None;
    }
    let r0 = (((top - lat_hi) / cs).floor().max(0.0) as usize).min(r.n_rows - 1);
    let r1 = (((top - lat_lo) / cs).ceil() as usize).clamp(1, r.n_rows) - 1;
    let globe = (r.n_cols as f64 * cs - 360.0).abs() < 1e-9;
    let cols: Vec<usize> = if globe {
        if lon_hi - lon_lo >= 360.0 {
            (0..r.n_cols).collect()
        } else {
            let c0 = ((lon_lo - r.xll) / cs).floor() as i64;
            let c1 = ((lon_hi - r.xll) / cs).ceil() as i64 - 1;
            (c0..=c1).map(|c| c.rem_euclid(r.n_cols as i64) as usize).collect()
        }
    } else {
        let east = r.xll + r.n_cols as f64 * cs;
        let mut out = Vec::new();
        for k in [-360.0, 0.0, 360.0] {
            let (lo, hi) = ((lon_lo + k).max(r.xll), (lon_hi + k).min(east));
            if lo <= hi {
                let c0 = (((lo - r.xll) / cs).floor() as usize).min(r.n_cols - 1);
                let c1 = (((hi - r.xll) / cs).ceil() as usize).clamp(1, r.n_cols) - 1;
                out.extend(c0..=c1.max(c0));
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    };
    (!cols.is_empty()).then_some(CellBox { rows: r0..=r1, cols })
}

/// Earth central angle, deg, enclosing every ground point that is both above
/// `min_elevation` and inside a cone of `off_nadir` deg around nadir, as seen
/// from geocentric radius `radius` km. Conservative: uses the polar radius.
fn coverage_angle(radius: f64, off_nadir: f64, min_elevation: f64) -> f64 {
    let k = WGS84_B / radius;
    let eps = min_elevation.to_radians();
    let visible = (k * eps.cos()).acos() - eps;
    let s = off_nadir.to_radians().sin() / k;
    let cone = if s < 1.0 {
        s.asin() - off_nadir.to_radians()
    } else {
        visible
    };
    visible.min(cone).to_degrees()
}

fn served_density(
    pop: &RasterGrid,
    land: &RasterGrid,
    classes: &ClassTable,
    row: usize,
    col: usize,
    lat: f64,
    lon: f64,
) -> Result<f64> {
    let omega = pop.at(row, col);
    if pop.is_nodata(omega) || omega == 0.0 {
        return Ok(0.0);
    }
    if omega < 0.0 {
        return Err(TrafficError::Config(format!("negative population density {omega}")));
    }
    let code = match land.sample_nearest(lat, lon) {
        Ok(v) => classes.code_of(land, v, OCEAN)?,
        Err(_) => OCEAN,
    };
    Ok(omega * classes.get(code)?.penetration)
}

/// One traffic value per `(satellite, beam)`, satellite-major, Mbps.
///
/// `rho` is demand per served person (Mbps). Integral mode sums
/// `Ω·penetration·area` over population cells whose centres lie inside the
/// beam cone and above the elevation mask.
pub fn physics_baseline(
    states: &[EphemerisRecord],
    pop: &RasterGrid,
    land: &RasterGrid,
    classes: &ClassTable,
    layout: &BeamLayout,
    rho: f64,
    mode: BaselineMode,
) -> Result<Vec<f64>> {
    layout.validate()?;
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(TrafficError::Config(format!("rho = {rho} must be positive")));
    }
    let mut out = Vec::with_capacity(states.len() * layout.n_beams);
    for s in states {
        let boresights: Vec<Vec3> = layout.offsets.iter().map(|o| beam_boresight(s, *o)).collect();
        let values = match mode {
            BaselineMode::Integral => integral(s, &boresights, pop, land, classes, layout)?,
            BaselineMode::PeakPool => peak_pool(s, &boresights, pop, land, classes)?,
        };
        out.extend(values.into_iter().map(|v| rho * v));
    }
    Ok(out)
}

fn integral(
    s: &EphemerisRecord,
    boresights: &[Vec3],
    pop: &RasterGrid,
    land: &RasterGrid,
    classes: &ClassTable,
    layout: &BeamLayout,
) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; boresights.len()];
    let tilt = layout.offsets.iter().map(|o| o[0].hypot(o[1])).fold(0.0, f64::max);
    let lambda = coverage_angle(norm(&s.position), tilt + layout.half_width, layout.min_elevation) + 0.5;
    let sub = ecef_to_geodetic(&s.position);
    let lat_edge = sub.lat.abs() + lambda;
    let dlon = if lat_edge >= 89.5 {
        360.0
    } else {
        lambda / lat_edge.to_radians().cos()
    };
    let Some(cells) = cell_box(pop, sub.lat - lambda, sub.lat + lambda, sub.lon - dlon, sub.lon + dlon) else {
        log::warn!("satellite {} footprint lies outside the population raster", s.sat_id);
        return Ok(acc);
    };
    let cos_hw = layout.half_width.to_radians().cos();
    let sin_el = layout.min_elevation.to_radians().sin();
    let cs = pop.cell_size;
    let top = pop.yll + pop.n_rows as f64 * cs;
    let e2 = WGS84_F * (2.0 - WGS84_F);
    let col_trig: Vec<(usize, f64, f64, f64)> = cells
        .cols
        .iter()
        .map(|&c| {
            let lon = pop.xll + (c as f64 + 0.5) * cs;
            let (sl, cl) = lon.to_radians().sin_cos();
            (c, lon, sl, cl)
        })
        .collect();
    for row in cells.rows {
        let lat_n = top - row as f64 * cs;
        let lat = lat_n - cs / 2.0;
        let area = ellipsoid_cell_area(lat_n - cs, lat_n, cs);
        let (sp, cp) = lat.to_radians().sin_cos();
        let n = WGS84_A / (1.0 - e2 * sp * sp).sqrt();
        for &(col, lon, sl, cl) in &col_trig {
            let g = [n * cp * cl, n * cp * sl, n * (1.0 - e2) * sp];
            let d = [g[0] - s.position[0], g[1] - s.position[1], g[2] - s.position[2]];
            let range = norm(&d);
            let up = [cp * cl, cp * sl, sp];
            if -dot(&d, &up) < sin_el * range {
                continue;
            }
            let hits: Vec<usize> = boresights
                .iter()
                .enumerate()
                .filter(|(_, b)| dot(&d, b) >= cos_hw * range)
                .map(|(i, _)| i)
                .collect();
            if hits.is_empty() {
                continue;
            }
            let w = served_density(pop, land, classes, row, col, lat, lon)? * area;
            for i in hits {
                acc[i] += w;
            }
        }
    }
    Ok(acc)
}

fn peak_pool(
    s: &EphemerisRecord,
    boresights: &[Vec3],
    pop: &RasterGrid,
    land: &RasterGrid,
    classes: &ClassTable,
) -> Result<Vec<f64>> {
    const HALF_WINDOW: f64 = 0.05;
    let cs = pop.cell_size;
    let top = pop.yll + pop.n_rows as f64 * cs;
    let mut out = Vec::with_capacity(boresights.len());
    for b in boresights {
        let Some(g) = ray_ellipsoid(&s.position, b) else {
            out.push(0.0);
            continue;
        };
        let c = ecef_to_geodetic(&g);
        let Some(cells) = cell_box(
            pop,
            c.lat - HALF_WINDOW,
            c.lat + HALF_WINDOW,
            c.lon - HALF_WINDOW,
            c.lon + HALF_WINDOW,
        ) else {
            log::warn!("satellite {} beam centre lies outside the population raster", s.sat_id);
            out.push(0.0);
            continue;
        };
        let mut peak = 0.0f64;
        for row in cells.rows {
            let lat = top - (row as f64 + 0.5) * cs;
            for &col in &cells.cols {
                let lon = pop.xll + (col as f64 + 0.5) * cs;
                peak = peak.max(served_density(pop, land, classes, row, col, lat, lon)?);
            }
        }
        out.push(peak);
    }
    Ok(out)
}

/// Hanning taps `0.5 − 0.5·cos(2πn/(W−1))`, scaled to unit sum.
pub fn hanning_window(len: usize) -> Result<Vec<f64>> {
    if len == 0 || len % 2 == 0 {
        return Err(TrafficError::Config(format!("Hanning window length {len} must be odd")));
    }
    if len == 1 {
        return Ok(vec![1.0]);
    }
    let w: Vec<f64> = (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64).cos())
        .collect();
    let sum: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / sum).collect())
}

/// Centred convolution with a unit-gain Hanning window; near the ends the
/// taps that fall inside the series are renormalized.
pub fn hanning_smooth(series: &[f64], len: usize) -> Result<Vec<f64>> {
    let w = hanning_window(len)?;
    let half = len / 2;
    let n = series.len() as isize;
    Ok((0..n)
        .map(|t| {
            let (mut num, mut den) = (0.0, 0.0);
            for (k, wk) in w.iter().enumerate() {
                let i = t + k as isize - half as isize;
                if (0..n).contains(&i) {
                    num += wk * series[i as usize];
                    den += wk;
                }
            }
            num / den
        })
        .collect())
}
