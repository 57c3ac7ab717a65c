//! Ephemeris CSV files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{EphemerisRecord, OrbitalError, Result};

pub const EPHEMERIS_HEADER: [&str; 8] = ["sat_id", "t_s", "x_km", "y_km", "z_km", "vx_kms", "vy_kms", "vz_kms"];

/// Floats are written in shortest round-trip form, so reading back is
/// bit-exact.
pub fn write_ephemeris(records: &[EphemerisRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(EPHEMERIS_HEADER)?;
    for r in records {
        let row = [
            r.sat_id.to_string(),
            r.t.to_string(),
            r.position[0].to_string(),
            r.position[1].to_string(),
            r.position[2].to_string(),
            r.velocity[0].to_string(),
            r.velocity[1].to_string(),
            r.velocity[2].to_string(),
        ];
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| OrbitalError::Io(e.into_error()))?.flush()?;
    Ok(())
}

pub fn read_ephemeris(path: &Path) -> Result<Vec<EphemerisRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != EPHEMERIS_HEADER {
        return Err(OrbitalError::Ephemeris(format!(
            "malformed header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        if row.len() != 8 {
            return Err(OrbitalError::Ephemeris(format!(
                "line {line}: expected 8 fields, found {}",
                row.len()
            )));
        }
        let f = |k: usize| -> Result<f64> {
            row[k]
                .trim()
                .parse()
                .map_err(|_| OrbitalError::Ephemeris(format!("line {line}: bad number {:?}", &row[k])))
        };
        let sat_id = row[0]
            .trim()
            .parse()
            .map_err(|_| OrbitalError::Ephemeris(format!("line {line}: bad sat_id {:?}", &row[0])))?;
        out.push(EphemerisRecord {
            sat_id,
            t: f(1)?,
            position: [f(2)?, f(3)?, f(4)?],
            velocity: [f(5)?, f(6)?, f(7)?],
        });
    }
    Ok(out)
}
