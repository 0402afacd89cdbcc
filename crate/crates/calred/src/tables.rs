//! CSV files: angle lists and per-iteration traces. Numbers are fixed-point
//! with six decimals.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use calred_core::{AngleSet, RunTrace};

use crate::error::CliError;
use crate::fsutil::write_atomic;

pub const ANGLE_HEADER: [&str; 2] = ["index", "angle_deg"];
pub const TRACE_HEADER: [&str; 6] = [
    "k",
    "objective",
    "red_penalty",
    "snr_db",
    "angle_rmse_deg",
    "elapsed_ms",
];

/// Six decimals; `inf`/`-inf`/`nan` spelled out.
pub fn fixed6(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else if v.is_nan() {
        "nan".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

fn optional(v: Option<f64>) -> String {
    v.map(fixed6).unwrap_or_default()
}

fn write_csv(path: &Path, fill: impl FnOnce(&mut csv::Writer<&mut File>) -> csv::Result<()>) -> Result<(), CliError> {
    write_atomic(path, |f| {
        let mut w = csv::Writer::from_writer(f);
        fill(&mut w).map_err(std::io::Error::other)?;
        w.flush()
    })
}

pub fn write_angles(path: &Path, angles: &AngleSet) -> Result<(), CliError> {
    write_csv(path, |w| {
        w.write_record(ANGLE_HEADER)?;
        for (i, a) in angles.degrees().iter().enumerate() {
            w.write_record([i.to_string(), fixed6(*a)])?;
        }
        Ok(())
    })
}

pub fn read_angles(path: &Path) -> Result<AngleSet, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let headers = r.headers().map_err(|e| CliError::format(path, e.to_string()))?.clone();
    let col = headers
        .iter()
        .position(|h| h.trim() == "angle_deg")
        .ok_or_else(|| CliError::format(path, "missing `angle_deg` column"))?;
    let mut angles = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::format(path, e.to_string()))?;
        let field = rec.get(col).unwrap_or("").trim();
        let v: f64 = field
            .parse()
            .map_err(|_| CliError::format(path, format!("row {}: bad angle `{field}`", line + 1)))?;
        angles.push(v);
    }
    AngleSet::new(angles).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn write_trace(path: &Path, trace: &RunTrace) -> Result<(), CliError> {
    write_csv(path, |w| {
        w.write_record(TRACE_HEADER)?;
        for r in &trace.records {
            w.write_record([
                r.k.to_string(),
                fixed6(r.objective),
                optional(r.red_penalty),
                optional(r.snr_db),
                optional(r.angle_rmse_deg),
                fixed6(r.elapsed_ms),
            ])?;
        }
        Ok(())
    })
}

/// Writes `key=value` report lines.
pub fn write_report<W: Write>(mut out: W, entries: &[(&str, f64)]) -> std::io::Result<()> {
    for (k, v) in entries {
        writeln!(out, "{k}={}", fixed6(*v))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_point_formatting() {
        assert_eq!(fixed6(20.0), "20.000000");
        assert_eq!(fixed6(-0.0000004), "-0.000000");
        assert_eq!(fixed6(f64::INFINITY), "inf");
        assert_eq!(fixed6(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn angles_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        let a = AngleSet::new(vec![0.0, 2.5, 177.123456]).unwrap();
        write_angles(&p, &a).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("index,angle_deg\n0,0.000000\n1,2.500000\n"));
        assert_eq!(read_angles(&p).unwrap(), a);
    }
}
