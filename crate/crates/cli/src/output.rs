//! CSV and JSON writers with `#` header lines carrying units and the config
//! hash, and the voltage-trace reader used by `analyze`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use levitation_core::analysis::{ChunkRecord, AXIS_LABELS};
use levitation_core::dynamics::Trajectory;
use levitation_core::transduction::VoltageTrace;
use levitation_core::{Error, Result};
use serde::Serialize;

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// JSON document `{ "config_hash": …, <value fields> }`.
pub fn write_json<T: Serialize>(path: &Path, hash: &str, value: &T) -> Result<()> {
    let mut v = serde_json::to_value(value).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let doc = match v.as_object_mut() {
        Some(map) => {
            map.insert("config_hash".into(), hash.into());
            v
        }
        None => serde_json::json!({ "config_hash": hash, "value": v }),
    };
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn write_header<W: Write>(w: &mut W, hash: &str, units: &str, columns: &str) -> Result<()> {
    writeln!(w, "# config sha256 {hash}")?;
    writeln!(w, "# {units}")?;
    writeln!(w, "{columns}")?;
    Ok(())
}

pub fn trajectory_header<W: Write>(w: &mut W, hash: &str) -> Result<()> {
    write_header(w, hash, "time s, position m, velocity m/s", "t,x,y,z,vx,vy,vz")
}

pub fn trajectory_rows<W: Write>(w: &mut W, t: &Trajectory) -> Result<()> {
    for (k, (p, v)) in t.positions.iter().zip(&t.velocities).enumerate() {
        writeln!(w, "{:.9},{:e},{:e},{:e},{:e},{:e},{:e}", t.time(k), p[0], p[1], p[2], v[0], v[1], v[2])?;
    }
    Ok(())
}

pub fn voltage_header<W: Write>(w: &mut W, hash: &str) -> Result<()> {
    write_header(w, hash, "time s, FLL output V", "t,v")
}

pub fn voltage_rows<W: Write>(w: &mut W, v: &VoltageTrace, start_s: f64) -> Result<()> {
    for (k, x) in v.volts.iter().enumerate() {
        writeln!(w, "{:.9},{:e}", start_s + k as f64 / v.sample_rate_hz, x)?;
    }
    Ok(())
}

pub fn chunks_header<W: Write>(w: &mut W, hash: &str) -> Result<()> {
    let mut cols = vec!["start_s".to_string()];
    for kind in ["f", "h"] {
        for a in AXIS_LABELS {
            cols.extend([format!("{kind}{a}_present"), format!("{kind}{a}_hz"), format!("{kind}{a}_area_v2"), format!("{kind}{a}_area_raw_v2")]);
        }
    }
    write_header(w, hash, "chunk start s, centroid Hz (empty when absent), peak areas V²; f fundamental, h second harmonic", &cols.join(","))
}

pub fn chunk_rows<W: Write>(w: &mut W, records: &[ChunkRecord]) -> Result<()> {
    for c in records {
        write!(w, "{:.3}", c.start_s)?;
        for p in c.fundamentals.iter().chain(&c.harmonics) {
            let f = p.center_hz.map(|f| format!("{f:.6}")).unwrap_or_default();
            write!(w, ",{},{f},{:e},{:e}", u8::from(p.present), p.area_v2, p.area_raw_v2)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Reads a `t,v` CSV (lines starting with `#` ignored); the sample rate is
/// taken from the time column, which must be uniform.
pub fn read_voltage_csv(path: &Path) -> Result<VoltageTrace> {
    let bad = |m: String| Error::InvalidParameter(format!("{}: {m}", path.display()));
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name).ok_or_else(|| bad(format!("missing column `{name}`")));
    let (ti, vi) = (col("t")?, col("v")?);
    let mut t = Vec::new();
    let mut volts = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| rec.get(i).and_then(|s| s.trim().parse::<f64>().ok()).ok_or_else(|| bad(format!("row {}: not a number", line + 1)));
        t.push(num(ti)?);
        volts.push(num(vi)?);
    }
    if t.len() < 2 {
        return Err(bad("need at least two samples".into()));
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    if !(dt > 0.0) || t.windows(2).any(|p| ((p[1] - p[0]) / dt - 1.0).abs() > 1e-3) {
        return Err(bad("time column is not uniformly sampled".into()));
    }
    Ok(VoltageTrace { sample_rate_hz: (1.0 / dt * 1e6).round() / 1e6, start_time_s: t[0], volts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn voltage_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        let v = VoltageTrace { sample_rate_hz: 1250.0, start_time_s: 0.0, volts: (0..3000).map(|k| (k as f64 * 0.01).sin()).collect() };
        let mut w = create(&path).unwrap();
        voltage_header(&mut w, "abc").unwrap();
        voltage_rows(&mut w, &v, 0.0).unwrap();
        w.flush().unwrap();
        drop(w);
        let back = read_voltage_csv(&path).unwrap();
        assert_eq!(back.sample_rate_hz, 1250.0);
        assert_eq!(back.volts.len(), 3000);
        for (a, b) in back.volts.iter().zip(&v.volts) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn non_uniform_times_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        std::fs::write(&path, "t,v\n0,1\n0.1,2\n0.5,3\n").unwrap();
        assert!(read_voltage_csv(&path).unwrap_err().to_string().contains("uniformly"));
    }

    #[test]
    fn json_carries_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.json");
        write_json(&path, "h1", &serde_json::json!({ "a": 1 })).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(v["config_hash"], "h1");
        assert_eq!(v["a"], 1);
    }
}
