//! Terrestrial rasters (population density, land cover, rain rate) in ESRI
//! ASCII-grid form, and the land-cover class table.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("raster header: missing key `{0}`")]
    MissingKey(&'static str),
    #[error("raster header: bad value for `{key}`: {text:?}")]
    BadHeader { key: &'static str, text: String },
    #[error("raster body: expected {expected} values, found {found}")]
    Arity { expected: usize, found: usize },
    #[error("raster body: value {index} is not a finite number: {text:?}")]
    BadValue { index: usize, text: String },
    #[error("query ({lat}, {lon}) outside raster bounds")]
    OutOfBounds { lat: f64, lon: f64 },
    #[error("land-cover class table: {0}")]
    ClassTable(String),
    #[error("land-cover code {0} not in class table")]
    UnknownClass(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GeoError>;

#[derive(Clone, Debug, PartialEq)]
pub struct RasterGrid {
    pub n_cols: usize,
    pub n_rows: usize,
    /// Longitude of the west edge, deg.
    pub xll: f64,
    /// Latitude of the south edge, deg.
    pub yll: f64,
    pub cell_size: f64,
    pub nodata: f64,
    /// Row-major, north row first.
    pub values: Vec<f64>,
}

const KEYS: [&str; 6] = ["ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"];

impl RasterGrid {
    pub fn new(
        n_cols: usize,
        n_rows: usize,
        xll: f64,
        yll: f64,
        cell_size: f64,
        nodata: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        let g = Self {
            n_cols,
            n_rows,
            xll,
            yll,
            cell_size,
            nodata,
            values,
        };
        g.validate()?;
        Ok(g)
    }

    /// Grid whose value at each cell center is `f(lat, lon)`.
    pub fn from_fn(
        n_cols: usize,
        n_rows: usize,
        xll: f64,
        yll: f64,
        cell_size: f64,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(n_cols * n_rows);
        for r in 0..n_rows {
            let lat = yll + (n_rows - r) as f64 * cell_size - cell_size / 2.0;
            for c in 0..n_cols {
                values.push(f(lat, xll + (c as f64 + 0.5) * cell_size));
            }
        }
        Self::new(n_cols, n_rows, xll, yll, cell_size, -9999.0, values)
    }

    fn validate(&self) -> Result<()> {
        if self.n_cols == 0 {
            return Err(GeoError::BadHeader {
                key: "ncols",
                text: "0".into(),
            });
        }
        if self.n_rows == 0 {
            return Err(GeoError::BadHeader {
                key: "nrows",
                text: "0".into(),
            });
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(GeoError::BadHeader {
                key: "cellsize",
                text: self.cell_size.to_string(),
            });
        }
        let expected = self.n_cols * self.n_rows;
        if self.values.len() != expected {
            return Err(GeoError::Arity {
                expected,
                found: self.values.len(),
            });
        }
        if let Some((index, v)) = self
            .values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() && !self.is_nodata(**v))
        {
            return Err(GeoError::BadValue {
                index,
                text: v.to_string(),
            });
        }
        Ok(())
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata || (v.is_nan() && self.nodata.is_nan())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut header = [f64::NAN; 6];
        for (slot, key) in header.iter_mut().zip(KEYS) {
            let k = tokens.next().ok_or(GeoError::MissingKey(key))?;
            if !k.eq_ignore_ascii_case(key) {
                return Err(GeoError::MissingKey(key));
            }
            let v = tokens.next().ok_or(GeoError::MissingKey(key))?;
            *slot = v.parse().map_err(|_| GeoError::BadHeader { key, text: v.into() })?;
        }
        let dims = |v: f64, key: &'static str| -> Result<usize> {
            if v >= 1.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(GeoError::BadHeader {
                    key,
                    text: v.to_string(),
                })
            }
        };
        let n_cols = dims(header[0], "ncols")?;
        let n_rows = dims(header[1], "nrows")?;
        let mut values = Vec::with_capacity(n_cols * n_rows);
        for (index, t) in tokens.enumerate() {
            values.push(
                t.parse::<f64>()
                    .map_err(|_| GeoError::BadValue { index, text: t.into() })?,
            );
        }
        Self::new(n_cols, n_rows, header[2], header[3], header[4], header[5], values)
    }

    pub fn to_ascii(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ncols {}", self.n_cols);
        let _ = writeln!(s, "nrows {}", self.n_rows);
        let _ = writeln!(s, "xllcorner {}", self.xll);
        let _ = writeln!(s, "yllcorner {}", self.yll);
        let _ = writeln!(s, "cellsize {}", self.cell_size);
        let _ = writeln!(s, "NODATA_value {}", self.nodata);
        for row in self.values.chunks(self.n_cols) {
            let line: Vec<String> = row.iter().map(f64::to_string).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn at(&self, row_from_north: usize, col: usize) -> f64 {
        self.values[row_from_north * self.n_cols + col]
    }

    fn covers_globe(&self) -> bool {
        (self.n_cols as f64 * self.cell_size - 360.0).abs() < 1e-9
    }

    /// Fractional (column, row-from-south) position of the query in cell
    /// units, with longitude wrapped into `[xll, xll + 360)`.
    fn position(&self, lat: f64, lon: f64) -> Result<(f64, f64)> {
        let out = || GeoError::OutOfBounds { lat, lon };
        if !lat.is_finite() || !lon.is_finite() {
            return Err(out());
        }
        let fx = (lon - self.xll).rem_euclid(360.0) / self.cell_size;
        let fy = (lat - self.yll) / self.cell_size;
        let (w, h) = (self.n_cols as f64, self.n_rows as f64);
        if fx > w + 1e-9 || !(-1e-9..=h + 1e-9).contains(&fy) {
            return Err(out());
        }
        Ok((fx.clamp(0.0, w), fy.clamp(0.0, h)))
    }

    pub fn sample_nearest(&self, lat: f64, lon: f64) -> Result<f64> {
        let (fx, fy) = self.position(lat, lon)?;
        let c = (fx.floor() as usize).min(self.n_cols - 1);
        let r_south = (fy.floor() as usize).min(self.n_rows - 1);
        Ok(self.at(self.n_rows - 1 - r_south, c))
    }

    /// Bilinear interpolation between the four surrounding cell centers;
    /// falls back to nearest if any of them is nodata.
    pub fn sample_bilinear(&self, lat: f64, lon: f64) -> Result<f64> {
        let (fx, fy) = self.position(lat, lon)?;
        let (gx, gy) = (fx - 0.5, fy - 0.5);
        let (x0, y0) = (gx.floor(), gy.floor());
        let (tx, ty) = (gx - x0, gy - y0);
        let wrap = self.covers_globe();
        let col = |c: f64| -> usize {
            let c = c as isize;
            if wrap {
                c.rem_euclid(self.n_cols as isize) as usize
            } else {
                c.clamp(0, self.n_cols as isize - 1) as usize
            }
        };
        let row = |r: f64| -> usize {
            let r = (r as isize).clamp(0, self.n_rows as isize - 1) as usize;
            self.n_rows - 1 - r
        };
        let (c0, c1, r0, r1) = (col(x0), col(x0 + 1.0), row(y0), row(y0 + 1.0));
        let corners = [self.at(r0, c0), self.at(r0, c1), self.at(r1, c0), self.at(r1, c1)];
        if corners.iter().any(|v| self.is_nodata(*v)) {
            return self.sample_nearest(lat, lon);
        }
        let south = corners[0] * (1.0 - tx) + corners[1] * tx;
        let north = corners[2] * (1.0 - tx) + corners[3] * tx;
        Ok(south * (1.0 - ty) + north * ty)
    }
}

pub fn load_raster(path: &Path) -> Result<RasterGrid> {
    RasterGrid::parse(&fs::read_to_string(path)?)
}

pub fn save_raster(grid: &RasterGrid, path: &Path) -> Result<()> {
    fs::write(path, grid.to_ascii())?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandCoverClass {
    pub code: u32,
    pub name: String,
    /// Rician K in dB; `null` means Rayleigh (K = 0 linear).
    pub rician_k_db: Option<f64>,
    /// Share of the population served by the satellite network.
    pub penetration: f64,
}

impl LandCoverClass {
    pub fn k_linear(&self) -> f64 {
        self.rician_k_db.map_or(0.0, |db| 10f64.powf(db / 10.0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassTable {
    pub classes: Vec<LandCoverClass>,
}

pub const OCEAN: u32 = 0;
pub const RURAL: u32 = 1;
pub const URBAN: u32 = 2;

impl Default for ClassTable {
    fn default() -> Self {
        let class = |code, name: &str, k, penetration| LandCoverClass {
            code,
            name: name.into(),
            rician_k_db: k,
            penetration,
        };
        Self {
            classes: vec![
                class(OCEAN, "Ocean", Some(12.0), 0.0),
                class(RURAL, "Rural", Some(8.0), 0.80),
                class(URBAN, "Urban", None, 0.05),
            ],
        }
    }
}

impl ClassTable {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in &self.classes {
            if !seen.insert(c.code) {
                return Err(GeoError::ClassTable(format!("duplicate code {}", c.code)));
            }
            if !(0.0..=1.0).contains(&c.penetration) {
                return Err(GeoError::ClassTable(format!(
                    "penetration {} of {} outside [0,1]",
                    c.penetration, c.name
                )));
            }
        }
        if self.classes.is_empty() {
            return Err(GeoError::ClassTable("empty".into()));
        }
        Ok(())
    }

    pub fn get(&self, code: u32) -> Result<&LandCoverClass> {
        self.classes
            .iter()
            .find(|c| c.code == code)
            .ok_or(GeoError::UnknownClass(code))
    }

    /// Interprets a raster sample as a class code; nodata maps to `fallback`.
    pub fn code_of(&self, raster: &RasterGrid, v: f64, fallback: u32) -> Result<u32> {
        if raster.is_nodata(v) {
            return Ok(fallback);
        }
        if v < 0.0 || v.fract() != 0.0 {
            return Err(GeoError::UnknownClass(u32::MAX));
        }
        let code = v as u32;
        self.get(code)?;
        Ok(code)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(nc: usize, nr: usize) -> String {
        format!("ncols {nc}\nnrows {nr}\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n")
    }

    #[test]
    fn single_cell() {
        let g = RasterGrid::parse(&(header(1, 1) + "7\n")).unwrap();
        assert_eq!(g.values, vec![7.0]);
        assert_eq!(g.sample_nearest(0.5, 0.5).unwrap(), 7.0);
    }

    #[test]
    fn arity_mismatch() {
        let e = RasterGrid::parse(&(header(2, 2) + "1 2 3\n")).unwrap_err();
        assert!(matches!(e, GeoError::Arity { expected: 4, found: 3 }));
    }

    #[test]
    fn missing_key() {
        let e = RasterGrid::parse("ncols 1\nnrows 1\n7").unwrap_err();
        assert!(matches!(e, GeoError::MissingKey("xllcorner")));
    }

    #[test]
    fn north_row_first() {
        let g = RasterGrid::parse(&(header(1, 2) + "1\n2\n")).unwrap();
        assert_eq!(g.sample_nearest(1.5, 0.5).unwrap(), 1.0);
        assert_eq!(g.sample_nearest(0.5, 0.5).unwrap(), 2.0);
    }

    #[test]
    fn centers_and_midpoints() {
        let g = RasterGrid::parse(&(header(2, 1) + "0 10\n")).unwrap();
        assert_eq!(g.sample_bilinear(0.5, 0.5).unwrap(), 0.0);
        assert_eq!(g.sample_bilinear(0.5, 1.5).unwrap(), 10.0);
        assert_eq!(g.sample_bilinear(0.5, 1.0).unwrap(), 5.0);
    }

    #[test]
    fn longitude_wraps_latitude_does_not() {
        let g = RasterGrid::parse(&(header(2, 1) + "3 4\n")).unwrap();
        assert_eq!(g.sample_nearest(0.5, 360.5).unwrap(), 3.0);
        assert_eq!(g.sample_nearest(0.5, -358.5).unwrap(), 4.0);
        assert!(g.sample_nearest(1.5, 0.5).is_err());
        assert!(g.sample_nearest(0.5, 5.0).is_err());
    }

    #[test]
    fn nodata_falls_back_to_nearest() {
        let g = RasterGrid::parse(&(header(2, 1) + "-9999 8\n")).unwrap();
        assert_eq!(g.sample_bilinear(0.5, 1.2).unwrap(), 8.0);
    }

    #[test]
    fn default_table_is_valid() {
        let t = ClassTable::default();
        t.validate().unwrap();
        assert_eq!(t.get(URBAN).unwrap().k_linear(), 0.0);
        assert!((t.get(OCEAN).unwrap().k_linear() - 15.848_931_924_611_133).abs() < 1e-12);
        assert!(t.get(9).is_err());
    }
}
