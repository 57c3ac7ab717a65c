//! Two-line element set parsing and formatting.

use chrono::{NaiveDate, TimeZone, Utc};

use super::{OrbitalError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TleRecord {
    pub sat_id: u32,
    pub name: Option<String>,
    /// Unix seconds (UTC).
    pub epoch: f64,
    /// deg
    pub inclination: f64,
    /// deg
    pub raan: f64,
    pub eccentricity: f64,
    /// deg
    pub arg_perigee: f64,
    /// deg
    pub mean_anomaly: f64,
    /// rev/day
    pub mean_motion: f64,
    /// 1/earth-radii
    pub bstar: f64,
}

impl TleRecord {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| {
            Err(OrbitalError::Elements {
                sat_id: self.sat_id,
                msg,
            })
        };
        if !(0.0..1.0).contains(&self.eccentricity) {
            return fail(format!("eccentricity {} outside [0, 1)", self.eccentricity));
        }
        if !(self.mean_motion > 0.0 && self.mean_motion < 20.0) {
            return fail(format!("mean motion {} rev/day outside (0, 20)", self.mean_motion));
        }
        if !(0.0..=180.0).contains(&self.inclination) {
            return fail(format!("inclination {} outside [0, 180]", self.inclination));
        }
        Ok(())
    }
}

/// Mod-10 sum of the first 68 columns: digits count their value, '-' counts 1.
fn checksum(line: &str) -> u32 {
    line.bytes()
        .take(68)
        .map(|b| match b {
            b'0'..=b'9' => (b - b'0') as u32,
            b'-' => 1,
            _ => 0,
        })
        .sum::<u32>()
        % 10
}

fn field<'a>(line: &'a str, from: usize, to: usize) -> &'a str {
    &line[from - 1..to]
}

fn num<T: std::str::FromStr>(line: &str, no: usize, from: usize, to: usize, name: &'static str) -> Result<T> {
    let text = field(line, from, to).trim();
    text.parse().map_err(|_| OrbitalError::Field {
        line: no,
        field: name,
        text: text.to_string(),
    })
}

/// Decodes the `±MMMMM±E` form meaning `±0.MMMMM × 10^(±E)`.
fn exp_coded(text: &str, no: usize, name: &'static str) -> Result<f64> {
    let bad = || OrbitalError::Field {
        line: no,
        field: name,
        text: text.to_string(),
    };
    let t = text.trim();
    if t.is_empty() {
        return Ok(0.0);
    }
    let (sign, rest) = match t.as_bytes()[0] {
        b'-' => (-1.0, &t[1..]),
        b'+' => (1.0, &t[1..]),
        _ => (1.0, t),
    };
    if rest.len() < 3 {
        return Err(bad());
    }
    let (mant, exp) = rest.split_at(rest.len() - 2);
    let mant: f64 = format!("0.{mant}").parse().map_err(|_| bad())?;
    let exp: i32 = exp.parse().map_err(|_| bad())?;
    Ok(sign * mant * 10f64.powi(exp))
}

fn check_line(line: &str, no: usize, expect: char) -> Result<()> {
    if line.len() != 69 || !line.is_ascii() {
        return Err(OrbitalError::LineLength {
            line: no,
            found: line.chars().count(),
        });
    }
    if !line.starts_with(expect) {
        return Err(OrbitalError::Structure {
            line: no,
            msg: format!("expected line number {expect}"),
        });
    }
    let stored = line.as_bytes()[68];
    if !stored.is_ascii_digit() {
        return Err(OrbitalError::Field {
            line: no,
            field: "checksum",
            text: (stored as char).to_string(),
        });
    }
    let stored = (stored - b'0') as u32;
    let computed = checksum(line);
    if computed != stored {
        return Err(OrbitalError::Checksum {
            line: no,
            computed,
            stored,
        });
    }
    Ok(())
}

fn epoch_seconds(yy: u32, day: f64, no: usize) -> Result<f64> {
    let year = if yy < 57 { 2000 + yy } else { 1900 + yy } as i32;
    let jan1 = NaiveDate::from_ymd_opt(year, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .ok_or_else(|| OrbitalError::Field {
            line: no,
            field: "epoch year",
            text: yy.to_string(),
        })?;
    if !(1.0..367.0).contains(&day) {
        return Err(OrbitalError::Field {
            line: no,
            field: "epoch day",
            text: day.to_string(),
        });
    }
    Ok(Utc.from_utc_datetime(&jan1).timestamp() as f64 + (day - 1.0) * 86_400.0)
}

fn parse_pair(name: Option<String>, l1: &str, n1: usize, l2: &str, n2: usize) -> Result<TleRecord> {
    check_line(l1, n1, '1')?;
    check_line(l2, n2, '2')?;
    let sat_id: u32 = num(l1, n1, 3, 7, "satellite number")?;
    let sat2: u32 = num(l2, n2, 3, 7, "satellite number")?;
    if sat_id != sat2 {
        return Err(OrbitalError::Structure {
            line: n2,
            msg: format!("satellite number {sat2} does not match line 1 ({sat_id})"),
        });
    }
    let yy: u32 = num(l1, n1, 19, 20, "epoch year")?;
    let day: f64 = num(l1, n1, 21, 32, "epoch day")?;
    let ecc_digits = field(l2, 27, 33).trim();
    let eccentricity: f64 = format!("0.{ecc_digits}").parse().map_err(|_| OrbitalError::Field {
        line: n2,
        field: "eccentricity",
        text: ecc_digits.to_string(),
    })?;
    let rec = TleRecord {
        sat_id,
        name,
        epoch: epoch_seconds(yy, day, n1)?,
        inclination: num(l2, n2, 9, 16, "inclination")?,
        raan: num(l2, n2, 18, 25, "raan")?,
        eccentricity,
        arg_perigee: num(l2, n2, 35, 42, "argument of perigee")?,
        mean_anomaly: num(l2, n2, 44, 51, "mean anomaly")?,
        mean_motion: num(l2, n2, 53, 63, "mean motion")?,
        bstar: exp_coded(field(l1, 54, 61), n1, "bstar")?,
    };
    rec.validate().map_err(|e| OrbitalError::Structure {
        line: n2,
        msg: e.to_string(),
    })?;
    Ok(rec)
}

/// Parses concatenated 2-line or 3-line (named) element sets. Blank lines
/// are ignored; reported line numbers are 1-based positions in `text`.
pub fn parse_tle(text: &str) -> Result<Vec<TleRecord>> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let (no, line) = lines[i];
        let name = if line.starts_with("1 ") {
            None
        } else {
            i += 1;
            Some(line.trim_start_matches("0 ").trim().to_string())
        };
        let Some(&(n1, l1)) = lines.get(i) else {
            return Err(OrbitalError::Structure {
                line: no,
                msg: "name line without element lines".into(),
            });
        };
        let Some(&(n2, l2)) = lines.get(i + 1) else {
            return Err(OrbitalError::Structure {
                line: n1,
                msg: "line 1 without line 2".into(),
            });
        };
        out.push(parse_pair(name, l1, n1, l2, n2)?);
        i += 2;
    }
    Ok(out)
}

fn format_exp_coded(v: f64) -> String {
    if v == 0.0 {
        return " 00000-0".to_string();
    }
    let sign = if v < 0.0 { '-' } else { ' ' };
    let m = v.abs();
    let mut exp = m.log10().floor() as i32 + 1;
    let mut mant = (m / 10f64.powi(exp) * 1e5).round() as u32;
    if mant >= 100_000 {
        mant /= 10;
        exp += 1;
    }
    let esign = if exp < 0 { '-' } else { '+' };
    format!("{sign}{mant:05}{esign}{}", exp.abs())
}

fn with_checksum(mut body: String) -> String {
    debug_assert_eq!(body.len(), 68);
    let c = checksum(&body);
    body.push(char::from_digit(c, 10).expect("digit"));
    body
}

/// Renders a record as its two 69-column lines.
pub fn format_tle(rec: &TleRecord) -> Result<(String, String)> {
    rec.validate()?;
    let dt = Utc
        .timestamp_opt(rec.epoch.floor() as i64, 0)
        .single()
        .ok_or_else(|| OrbitalError::Elements {
            sat_id: rec.sat_id,
            msg: "epoch out of range".into(),
        })?;
    use chrono::Datelike;
    let year = dt.year();
    let jan1 = Utc.with_ymd_and_hms(year, 1, 1, 0, 0, 0).single().expect("valid date");
    let day = (rec.epoch - jan1.timestamp() as f64) / 86_400.0 + 1.0;
    let l1 = format!(
        "1 {:05}U 00000A   {:02}{:012.8}  .00000000  00000-0 {} 0  999",
        rec.sat_id,
        year % 100,
        day,
        format_exp_coded(rec.bstar)
    );
    let ecc = format!("{:.7}", rec.eccentricity);
    let l2 = format!(
        "2 {:05} {:8.4} {:8.4} {} {:8.4} {:8.4} {:11.8}    0",
        rec.sat_id,
        rec.inclination,
        rec.raan.rem_euclid(360.0),
        &ecc[2..],
        rec.arg_perigee.rem_euclid(360.0),
        rec.mean_anomaly.rem_euclid(360.0),
        rec.mean_motion
    );
    Ok((with_checksum(l1), with_checksum(l2)))
}

#[cfg(test)]
mod tests {
    use super::*;

    const ISS: &str = "ISS (ZARYA)
1 25544U 98067A   20194.88612269 -.00002218  00000-0 -31515-4 0  9992
2 25544  51.6461 221.2784 0001413  89.1723 280.4612 15.49507896236008";

    #[test]
    fn empty_input_is_empty() {
        assert!(parse_tle("").unwrap().is_empty());
    }

    #[test]
    fn decodes_named_set() {
        let r = &parse_tle(ISS).unwrap()[0];
        assert_eq!(r.sat_id, 25544);
        assert_eq!(r.name.as_deref(), Some("ISS (ZARYA)"));
        assert_eq!(r.eccentricity, 0.0001413);
        assert_eq!(r.inclination, 51.6461);
        assert_eq!(r.raan, 221.2784);
        assert_eq!(r.mean_motion, 15.49507896);
        assert!((r.bstar + 0.31515e-4).abs() < 1e-18);
        // 2020-01-01T00:00:00Z = 1577836800; day 194.88612269
        let expect = 1_577_836_800.0 + 193.88612269 * 86_400.0;
        assert!((r.epoch - expect).abs() < 1e-3);
    }

    #[test]
    fn corrupted_checksum_names_the_line() {
        let bad = ISS.replace("0  9992", "0  9993");
        match parse_tle(&bad) {
            Err(OrbitalError::Checksum { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn short_line_rejected() {
        let bad = ISS.replace("15.49507896236008", "15.4950789623600");
        assert!(matches!(parse_tle(&bad), Err(OrbitalError::LineLength { line: 3, .. })));
    }

    #[test]
    fn format_then_parse_roundtrips() {
        let r = parse_tle(ISS).unwrap().remove(0);
        let (l1, l2) = format_tle(&r).unwrap();
        assert_eq!(l1.len(), 69);
        let back = parse_tle(&format!("{l1}\n{l2}\n")).unwrap().remove(0);
        assert_eq!(back.sat_id, r.sat_id);
        assert_eq!(back.eccentricity, r.eccentricity);
        assert_eq!(back.mean_motion, r.mean_motion);
        assert!((back.epoch - r.epoch).abs() < 1e-3);
        assert!((back.bstar - r.bstar).abs() < 1e-12);
    }
}
