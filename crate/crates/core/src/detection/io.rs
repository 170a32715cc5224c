//! Self-describing record files and plain-text spectrum export.
//!
//! Binary layout: 8-byte magic `GUPSREC\n`, little-endian `u32` header
//! length, a JSON header (kind, timebase, columns with units, provenance),
//! then each column as little-endian `f64`, column after column.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detection::{Provenance, QuadratureRecord, SpectrumEstimate, TimeSeries};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"GUPSREC\n";
const VERSION: u32 = 1;

/// Hex SHA-256 of the canonical JSON encoding of `value`.
pub fn content_hash<T: Serialize + ?Sized>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("value serializes to JSON");
    hex::encode(Sha256::digest(&json))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    kind: String,
    version: u32,
    t0_s: f64,
    dt_s: f64,
    sample_rate_hz: f64,
    n_samples: usize,
    columns: Vec<String>,
    units: Vec<String>,
    cycle_index: Option<usize>,
    seed: Option<u64>,
    config_hash: String,
}

fn write_columns<W: Write>(mut w: W, header: &Header, columns: &[&[f64]]) -> Result<()> {
    let json = serde_json::to_vec(header).map_err(|e| Error::Format(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    let mut buf = Vec::with_capacity(columns.iter().map(|c| c.len() * 8).sum());
    for col in columns {
        for v in col.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_columns<R: Read>(mut r: R) -> Result<(Header, Vec<Vec<f64>>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a record file (bad magic)".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut json)?;
    let header: Header =
        serde_json::from_slice(&json).map_err(|e| Error::Format(format!("header: {e}")))?;
    if header.version != VERSION {
        return Err(Error::Format(format!("unsupported record version {}", header.version)));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let n = header.n_samples;
    let expected = n * 8 * header.columns.len();
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "payload has {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let columns = bytes
        .chunks_exact(n * 8)
        .map(|col| {
            col.chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect()
        })
        .collect();
    Ok((header, columns))
}

fn header_for(ts: &TimeSeries, kind: &str, columns: &[&str], units: &str, cycle: Option<usize>) -> Header {
    Header {
        kind: kind.into(),
        version: VERSION,
        t0_s: ts.t0,
        dt_s: ts.dt,
        sample_rate_hz: ts.sample_rate(),
        n_samples: ts.len(),
        columns: columns.iter().map(|c| c.to_string()).collect(),
        units: columns.iter().map(|_| units.to_string()).collect(),
        cycle_index: cycle,
        seed: ts.metadata.seed,
        config_hash: ts.metadata.config_hash.clone(),
    }
}

fn provenance(h: &Header) -> Provenance {
    Provenance {
        seed: h.seed,
        config_hash: h.config_hash.clone(),
    }
}

pub fn write_time_series<W: Write>(w: W, ts: &TimeSeries) -> Result<()> {
    let header = header_for(ts, "time_series", &["signal"], "detector units", None);
    write_columns(w, &header, &[&ts.samples])
}

pub fn read_time_series<R: Read>(r: R) -> Result<TimeSeries> {
    let (h, mut cols) = read_columns(r)?;
    if h.kind != "time_series" || cols.len() != 1 {
        return Err(Error::Format(format!("expected a time series, found {}", h.kind)));
    }
    TimeSeries::new(h.t0_s, h.dt_s, cols.remove(0), provenance(&h))
}

pub fn write_record<W: Write>(w: W, rec: &QuadratureRecord) -> Result<()> {
    let header = header_for(&rec.x, "quadrature_record", &["X", "Y"], "detector units", Some(rec.cycle_index));
    write_columns(w, &header, &[&rec.x.samples, &rec.y.samples])
}

pub fn read_record<R: Read>(r: R) -> Result<QuadratureRecord> {
    let (h, mut cols) = read_columns(r)?;
    if h.kind != "quadrature_record" || cols.len() != 2 {
        return Err(Error::Format(format!("expected a quadrature record, found {}", h.kind)));
    }
    let y = cols.pop().expect("two columns");
    let x = cols.pop().expect("two columns");
    let p = provenance(&h);
    QuadratureRecord::new(
        TimeSeries::new(h.t0_s, h.dt_s, x, p.clone())?,
        TimeSeries::new(h.t0_s, h.dt_s, y, p)?,
        h.cycle_index.unwrap_or(0),
    )
}

/// Two-column text: frequency (Hz) and PSD (units²/Hz), with a commented header.
pub fn write_spectrum<W: Write>(mut w: W, spec: &SpectrumEstimate, meta: &Provenance) -> Result<()> {
    writeln!(w, "# gupsim spectrum v1")?;
    writeln!(w, "# resolution_hz = {}", spec.resolution)?;
    writeln!(w, "# n_averages = {}", spec.n_averages)?;
    if let Some(seed) = meta.seed {
        writeln!(w, "# seed = {seed}")?;
    }
    writeln!(w, "# config_hash = {}", meta.config_hash)?;
    writeln!(w, "# columns: frequency_hz psd_units2_per_hz")?;
    for (f, p) in spec.freqs.iter().zip(&spec.psd) {
        writeln!(w, "{f:.6} {p:.9e}")?;
    }
    Ok(())
}
