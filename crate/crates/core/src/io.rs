//! Output formats: 17-digit CSV, binary snapshots with JSON sidecars.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable overriding the output directory.
pub const OUT_ENV: &str = "QUENCHLAB_OUT";

/// Formats a float with 17 significant digits, enough to round-trip exactly.
pub fn fmt17(v: f64) -> String {
    if v == 0.0 {
        // Keep the sign of negative zero out of the files.
        return "0.0000000000000000e0".to_string();
    }
    format!("{v:.16e}")
}

/// Output directory: `QUENCHLAB_OUT` when set, else `fallback`.
pub fn output_dir(fallback: &Path) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => fallback.to_path_buf(),
    }
}

/// Writes a CSV file; every row must match the header length.
pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Sidecar metadata of a field snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub nx: usize,
    pub ny: usize,
    pub l: f64,
    #[serde(rename = "X")]
    pub x_halfwidth: f64,
    pub time: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub theta0: f64,
    /// Time axis for stacked tables (one `nx × ny` slab per entry); absent for single snapshots.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
}

fn with_ext(base: &Path, ext: &str) -> PathBuf {
    let mut p = base.as_os_str().to_owned();
    p.push(".");
    p.push(ext);
    PathBuf::from(p)
}

/// Writes `<base>.bin` (little-endian f64, row-major) and `<base>.json`.
pub fn write_snapshot(base: &Path, values: &[f64], meta: &SnapshotMeta) -> Result<()> {
    let slabs = meta.times.as_ref().map_or(1, Vec::len);
    if values.len() != meta.nx * meta.ny * slabs {
        return Err(Error::GridMismatch(format!(
            "snapshot has {} values, metadata implies {}",
            values.len(),
            meta.nx * meta.ny * slabs
        )));
    }
    if let Some(parent) = base.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(with_ext(base, "bin"))?);
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    write_json(&with_ext(base, "json"), meta)
}

pub fn read_snapshot(base: &Path) -> Result<(Vec<f64>, SnapshotMeta)> {
    let meta: SnapshotMeta = read_json(&with_ext(base, "json"))?;
    let mut bytes = Vec::new();
    BufReader::new(File::open(with_ext(base, "bin"))?).read_to_end(&mut bytes)?;
    let slabs = meta.times.as_ref().map_or(1, Vec::len);
    if bytes.len() != 8 * meta.nx * meta.ny * slabs {
        return Err(Error::GridMismatch(format!(
            "binary holds {} bytes, metadata implies {}",
            bytes.len(),
            8 * meta.nx * meta.ny * slabs
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((values, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, f64::MIN_POSITIVE] {
            let s = fmt17(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let mantissa = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(mantissa.len(), 17);
        }
        assert_eq!(fmt17(-0.0), fmt17(0.0));
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("snap");
        let meta = SnapshotMeta {
            nx: 3,
            ny: 2,
            l: 1.0,
            x_halfwidth: std::f64::consts::PI,
            time: 0.5,
            a: 10.0,
            m: 1.0,
            theta0: 0.25,
            times: None,
        };
        let v: Vec<f64> = (0..6).map(|k| k as f64 * 0.1).collect();
        write_snapshot(&base, &v, &meta).unwrap();
        let (back, m) = read_snapshot(&base).unwrap();
        assert_eq!(back, v);
        assert_eq!(m, meta);
        let json = std::fs::read_to_string(dir.path().join("snap.json")).unwrap();
        assert!(json.contains("\"X\"") && json.contains("\"theta0\""));
        assert!(write_snapshot(&base, &v[..5], &meta).is_err());
    }
}
