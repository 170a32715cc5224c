//! Series and campaign orchestration.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{synthesize_bhd, QuadratureRecord, TimeSeries};
use crate::error::{Error, Result};
use crate::protocol::{cycle_seed, run_cycle, CampaignConfig, SeriesPlan};
use crate::rng::derive_seed;

pub const TOOL_VERSION: &str = concat!("gupsim ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetProvenance {
    pub seed: u64,
    pub tool_version: String,
    pub config_hash: String,
}

/// One series of consecutive cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub series_index: usize,
    /// Hz.
    pub probe_detuning_hz: f64,
    pub alpha_sq: f64,
    /// Ordered by cycle; `cycle_index` counts across the whole campaign.
    pub records: Vec<QuadratureRecord>,
    pub raw: Option<Vec<TimeSeries>>,
    pub config: CampaignConfig,
    pub provenance: DatasetProvenance,
}

impl Dataset {
    pub fn first_cycle(&self) -> usize {
        self.series_index * self.config.schedule.cycles_per_series
    }

    /// Averages of `group_size` consecutive cycles; a trailing partial group is dropped.
    pub fn group_averages(&self, group_size: usize) -> Result<Vec<QuadratureRecord>> {
        if group_size == 0 {
            return Err(Error::InvalidConfig("group size must be positive".into()));
        }
        self.records
            .chunks_exact(group_size)
            .map(|g| QuadratureRecord::average(&g.iter().collect::<Vec<_>>()))
            .collect()
    }

    pub fn average(&self) -> Result<QuadratureRecord> {
        QuadratureRecord::average(&self.records.iter().collect::<Vec<_>>())
    }
}

fn provenance(cfg: &CampaignConfig) -> DatasetProvenance {
    DatasetProvenance {
        seed: cfg.seed,
        tool_version: TOOL_VERSION.into(),
        config_hash: cfg.hash(),
    }
}

/// Runs every cycle of series `series_index`; cycles run in parallel on
/// their own derived seeds and are collected in cycle order.
pub fn run_series(cfg: &CampaignConfig, series_index: usize) -> Result<Dataset> {
    if series_index >= cfg.campaign.n_series {
        return Err(Error::InvalidConfig(format!(
            "series {series_index} outside a campaign of {}",
            cfg.campaign.n_series
        )));
    }
    let plan = SeriesPlan::new(cfg, series_index)?;
    let keep_raw = cfg.campaign.store_raw;
    let outputs = (0..cfg.schedule.cycles_per_series)
        .into_par_iter()
        .map(|c| run_cycle(cfg, &plan, c, cycle_seed(cfg, series_index, c), keep_raw))
        .collect::<Result<Vec<_>>>()?;
    let mut records = Vec::with_capacity(outputs.len());
    let mut raw = keep_raw.then(Vec::new);
    for out in outputs {
        records.push(out.record);
        if let (Some(r), Some(ts)) = (raw.as_mut(), out.raw) {
            r.push(ts);
        }
    }
    Ok(Dataset {
        series_index,
        probe_detuning_hz: plan.probe_detuning / (2.0 * PI),
        alpha_sq: plan.alpha_sq,
        records,
        raw,
        config: cfg.clone(),
        provenance: provenance(cfg),
    })
}

/// Runs `n_series` series. The configured campaign size is replaced by
/// `n_series`; per-series lists must cover it.
pub fn run_campaign(cfg: &CampaignConfig, n_series: usize) -> Result<Vec<Dataset>> {
    if n_series == 0 {
        return Err(Error::InvalidConfig("a campaign needs at least one series".into()));
    }
    let mut cfg = cfg.clone();
    if n_series != cfg.campaign.n_series {
        for list in [&mut cfg.campaign.probe_detunings_hz, &mut cfg.campaign.alpha_sq_steps] {
            if !list.is_empty() {
                if list.len() < n_series {
                    return Err(Error::InvalidConfig(format!(
                        "per-series list has {} entries for {n_series} series",
                        list.len()
                    )));
                }
                list.truncate(n_series);
            }
        }
        cfg.campaign.n_series = n_series;
    }
    cfg.validate()?;
    for w in cfg
        .schedule
        .warnings(2.0 * PI * cfg.operating.linewidth_hz, cfg.mechanical_mode()?.gamma_m)
    {
        log::warn!("{w}");
    }
    (0..n_series).map(|s| run_series(&cfg, s)).collect()
}

/// Stationary pump-on heterodyne record `k` for sideband thermometry.
pub fn stationary_segment(cfg: &CampaignConfig, k: usize) -> Result<TimeSeries> {
    let seed = derive_seed(cfg.seed, &[u64::MAX - 1, k as u64]);
    let mut ts = synthesize_bhd(
        &cfg.cooled_state()?,
        &cfg.mechanical_mode()?,
        &cfg.detection_config(),
        cfg.campaign.stationary_segment_s,
        seed,
    )?;
    ts.metadata.config_hash = cfg.hash();
    Ok(ts)
}

/// All configured stationary records.
pub fn run_stationary(cfg: &CampaignConfig) -> Result<Vec<TimeSeries>> {
    (0..cfg.campaign.stationary_segments)
        .into_par_iter()
        .map(|k| stationary_segment(cfg, k))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CampaignConfig {
        let mut cfg = CampaignConfig::default();
        cfg.schedule.cycles_per_series = 6;
        cfg.schedule.group_size = 3;
        cfg
    }

    #[test]
    fn zero_series_is_an_error() {
        assert!(matches!(run_campaign(&small(), 0), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn records_carry_global_cycle_indices() {
        let ds = run_campaign(&small(), 2).unwrap();
        assert_eq!(ds.len(), 2);
        for d in &ds {
            assert_eq!(d.records.len(), 6);
            for (k, r) in d.records.iter().enumerate() {
                assert_eq!(r.cycle_index, d.first_cycle() + k);
            }
        }
        assert_eq!(ds[0].group_averages(3).unwrap().len(), 2);
        assert_eq!(ds[0].group_averages(4).unwrap().len(), 1);
    }

    #[test]
    fn campaign_is_deterministic() {
        let cfg = small();
        assert_eq!(run_campaign(&cfg, 1).unwrap(), run_campaign(&cfg, 1).unwrap());
    }

    #[test]
    fn detuning_list_sets_series() {
        let mut cfg = small();
        cfg.campaign.probe_detunings_hz = vec![-1e5, 0.0, 1e5];
        cfg.campaign.n_series = 3;
        let ds = run_campaign(&cfg, 2).unwrap();
        assert_eq!(ds[1].probe_detuning_hz, 0.0);
        assert_eq!(ds[0].probe_detuning_hz, -1e5);
    }
}
