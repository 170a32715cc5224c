//! Dataset directory layout.
//!
//! ```text
//! <dir>/config.snapshot        TOML config with a hash and version header
//! <dir>/records/NNNN.qrec      quadrature records, global cycle index
//! <dir>/raw/NNNN.tsr           raw heterodyne cycles (optional)
//! <dir>/stationary/NNNN.tsr    stationary records for thermometry (optional)
//! <dir>/summary.report         campaign summary, JSON
//! <dir>/fits.report            per-group ring-down and shift fits, JSON
//! ```

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::detection::io::{read_record, read_time_series, write_record, write_time_series};
use crate::detection::{QuadratureRecord, TimeSeries};
use crate::error::{Error, Result};
use crate::protocol::{
    CampaignConfig, CampaignSummary, Dataset, DatasetProvenance, SeriesAnalysis, TOOL_VERSION,
};

pub const CONFIG_SNAPSHOT: &str = "config.snapshot";
pub const SUMMARY_REPORT: &str = "summary.report";
pub const FITS_REPORT: &str = "fits.report";

fn indexed(dir: &Path, sub: &str, k: usize, ext: &str) -> PathBuf {
    dir.join(sub).join(format!("{k:04}.{ext}"))
}

pub fn write_config_snapshot(dir: &Path, cfg: &CampaignConfig) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join(CONFIG_SNAPSHOT))?);
    writeln!(w, "# config_hash = \"{}\"", cfg.hash())?;
    writeln!(w, "# tool_version = \"{TOOL_VERSION}\"")?;
    w.write_all(cfg.to_toml()?.as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn read_config_snapshot(dir: &Path) -> Result<CampaignConfig> {
    let path = dir.join(CONFIG_SNAPSHOT);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let cfg = CampaignConfig::from_toml(&text)?;
    let stamped = text
        .lines()
        .find_map(|l| l.strip_prefix("# config_hash = \""))
        .map(|s| s.trim_end_matches('"'));
    if let Some(h) = stamped {
        if h != cfg.hash() {
            return Err(Error::Format(format!(
                "config snapshot hash {h} does not match its content ({})",
                cfg.hash()
            )));
        }
    }
    Ok(cfg)
}

fn write_series_file(path: &Path, ts: &TimeSeries) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_time_series(&mut w, ts)?;
    w.flush()?;
    Ok(())
}

/// Writes datasets (and optional stationary records) below `dir`.
pub fn write_datasets(dir: &Path, datasets: &[Dataset], stationary: &[TimeSeries]) -> Result<()> {
    let first = datasets
        .first()
        .ok_or_else(|| Error::InsufficientData("nothing to write".into()))?;
    write_config_snapshot(dir, &first.config)?;
    fs::create_dir_all(dir.join("records"))?;
    for ds in datasets {
        for rec in &ds.records {
            let mut w = BufWriter::new(File::create(indexed(dir, "records", rec.cycle_index, "qrec"))?);
            write_record(&mut w, rec)?;
            w.flush()?;
        }
        if let Some(raw) = &ds.raw {
            fs::create_dir_all(dir.join("raw"))?;
            for (rec, ts) in ds.records.iter().zip(raw) {
                write_series_file(&indexed(dir, "raw", rec.cycle_index, "tsr"), ts)?;
            }
        }
    }
    if !stationary.is_empty() {
        fs::create_dir_all(dir.join("stationary"))?;
        for (k, ts) in stationary.iter().enumerate() {
            write_series_file(&indexed(dir, "stationary", k, "tsr"), ts)?;
        }
    }
    Ok(())
}

pub fn read_record_file(path: &Path) -> Result<QuadratureRecord> {
    read_record(BufReader::new(File::open(path)?))
}

pub fn read_series_file(path: &Path) -> Result<TimeSeries> {
    read_time_series(BufReader::new(File::open(path)?))
}

/// Reads a dataset directory back into per-series datasets.
pub fn read_datasets(dir: &Path) -> Result<Vec<Dataset>> {
    let cfg = read_config_snapshot(dir)?;
    let cps = cfg.schedule.cycles_per_series;
    let detunings = cfg.series_detunings();
    let alphas = cfg.series_alpha_sq();
    let provenance = DatasetProvenance {
        seed: cfg.seed,
        tool_version: TOOL_VERSION.into(),
        config_hash: cfg.hash(),
    };
    let with_raw = dir.join("raw").is_dir();
    (0..cfg.campaign.n_series)
        .map(|s| {
            let mut records = Vec::with_capacity(cps);
            let mut raw = with_raw.then(Vec::new);
            for c in 0..cps {
                let k = s * cps + c;
                let rec = read_record_file(&indexed(dir, "records", k, "qrec"))?;
                if rec.cycle_index != k {
                    return Err(Error::Format(format!(
                        "record file {k:04} carries cycle index {}",
                        rec.cycle_index
                    )));
                }
                records.push(rec);
                if let Some(r) = raw.as_mut() {
                    r.push(read_series_file(&indexed(dir, "raw", k, "tsr"))?);
                }
            }
            Ok(Dataset {
                series_index: s,
                probe_detuning_hz: detunings[s] / (2.0 * std::f64::consts::PI),
                alpha_sq: alphas[s],
                records,
                raw,
                config: cfg.clone(),
                provenance: provenance.clone(),
            })
        })
        .collect()
}

/// Paths of the stationary records in index order; empty when none were written.
pub fn stationary_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let sub = dir.join("stationary");
    if !sub.is_dir() {
        return Ok(Vec::new());
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(&sub)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "tsr"))
        .collect();
    paths.sort();
    Ok(paths)
}

/// Stationary records in index order; empty when none were written.
pub fn read_stationary(dir: &Path) -> Result<Vec<TimeSeries>> {
    stationary_paths(dir)?.iter().map(|p| read_series_file(p)).collect()
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    json.push('\n');
    fs::write(path, json)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_summary(dir: &Path, summary: &CampaignSummary) -> Result<()> {
    write_json(&dir.join(SUMMARY_REPORT), summary)
}

pub fn read_summary(path: &Path) -> Result<CampaignSummary> {
    read_json(path)
}

pub fn write_fits(dir: &Path, analyses: &[SeriesAnalysis]) -> Result<()> {
    write_json(&dir.join(FITS_REPORT), &analyses)
}

pub fn read_fits(path: &Path) -> Result<Vec<SeriesAnalysis>> {
    read_json(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{run_campaign, run_stationary};

    #[test]
    fn directory_round_trip() {
        let mut cfg = CampaignConfig::default();
        cfg.schedule.cycles_per_series = 3;
        cfg.schedule.group_size = 3;
        cfg.campaign.store_raw = true;
        cfg.campaign.stationary_segments = 1;
        cfg.campaign.stationary_segment_s = 2e-3;
        let ds = run_campaign(&cfg, 2).unwrap();
        let st = run_stationary(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_datasets(dir.path(), &ds, &st).unwrap();
        assert!(dir.path().join("records/0005.qrec").is_file());
        let back = read_datasets(dir.path()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(read_stationary(dir.path()).unwrap(), st);
    }

    #[test]
    fn tampered_snapshot_rejected() {
        let cfg = CampaignConfig::default();
        let dir = tempfile::tempdir().unwrap();
        write_config_snapshot(dir.path(), &cfg).unwrap();
        let path = dir.path().join(CONFIG_SNAPSHOT);
        let text = fs::read_to_string(&path).unwrap().replace("seed = 1", "seed = 2");
        fs::write(&path, text).unwrap();
        assert!(matches!(read_config_snapshot(dir.path()), Err(Error::Format(_))));
    }
}
