//! Per-series fits and the campaign summary.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{
    aggregate_shifts, fit_ringdown, fit_transient_shift, width_vs_shift_scan, RingdownFit, ShiftFit,
    ShiftScan, ShiftStatistics,
};
use crate::protocol::{CampaignConfig, Dataset, TOOL_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub group_index: usize,
    pub first_cycle: usize,
    pub ringdown: RingdownFit,
    pub shift_x: ShiftFit,
    pub shift_y: ShiftFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFailure {
    pub group_index: usize,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesAnalysis {
    pub series_index: usize,
    pub probe_detuning_hz: f64,
    pub alpha_sq: f64,
    /// Fit of the all-cycle average over the series window.
    pub series_fit: Option<RingdownFit>,
    /// `|Γ_eff|/2π` below the configured limit on the series fit.
    pub null_damping: bool,
    pub groups: Vec<GroupResult>,
    pub failures: Vec<GroupFailure>,
}

impl SeriesAnalysis {
    pub fn shift_fits(&self) -> (Vec<ShiftFit>, Vec<ShiftFit>) {
        self.groups.iter().map(|g| (g.shift_x.clone(), g.shift_y.clone())).unzip()
    }
}

fn fit_group(cfg: &CampaignConfig, rec: &crate::detection::QuadratureRecord) -> Result<(RingdownFit, ShiftFit, ShiftFit)> {
    let a = &cfg.analysis;
    let base = fit_ringdown(rec, &cfg.ringdown_options(a.base_window_s))?;
    let (sx, sy) = fit_transient_shift(rec, &base, (a.early_window_s[0], a.early_window_s[1]))?;
    Ok((base, sx, sy))
}

/// Group-averages the series, fits each group (ring-down then early-time
/// shift) and fits the whole-series average. Failed groups are reported,
/// not fatal.
pub fn analyze_dataset(ds: &Dataset) -> Result<SeriesAnalysis> {
    let cfg = &ds.config;
    let g = cfg.schedule.group_size;
    let groups = ds.group_averages(g)?;
    let results: Vec<_> = groups.par_iter().map(|rec| fit_group(cfg, rec)).collect();
    let mut fits = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((ringdown, shift_x, shift_y)) => fits.push(GroupResult {
                group_index: i,
                first_cycle: ds.first_cycle() + i * g,
                ringdown,
                shift_x,
                shift_y,
            }),
            Err(e) => failures.push(GroupFailure {
                group_index: i,
                kind: e.kind().into(),
                message: e.to_string(),
            }),
        }
    }
    let series_fit = fit_ringdown(&ds.average()?, &cfg.ringdown_options(cfg.analysis.series_window_s))
        .map_err(|e| log::warn!("series {} average fit failed: {e}", ds.series_index))
        .ok();
    let null_damping = series_fit
        .as_ref()
        .is_some_and(|f| f.is_null_damping(cfg.analysis.null_damping_limit_hz));
    Ok(SeriesAnalysis {
        series_index: ds.series_index,
        probe_detuning_hz: ds.probe_detuning_hz,
        alpha_sq: ds.alpha_sq,
        series_fit,
        null_damping,
        groups: fits,
        failures,
    })
}

/// Compact per-series line of the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub series_index: usize,
    pub probe_detuning_hz: f64,
    pub alpha_sq: f64,
    pub n_groups: usize,
    pub n_failed: usize,
    /// Series-average fit: `f_m`, Hz.
    pub f_m_hz: Option<f64>,
    pub f_m_std_hz: Option<f64>,
    /// Series-average fit: `Γ_eff/2π`, Hz.
    pub width_hz: Option<f64>,
    pub width_std_hz: Option<f64>,
    pub null_damping: bool,
    pub shift_x: Option<ShiftStatistics>,
    pub shift_y: Option<ShiftStatistics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub n_series: usize,
    pub n_groups: usize,
    pub n_failed: usize,
    /// Per-quadrature statistics of `δf_m⁰` over all groups, Hz; not combined.
    pub shift_x: Option<ShiftStatistics>,
    pub shift_y: Option<ShiftStatistics>,
    /// Width against shift across series, when the probe detuning varies.
    pub scan: Option<ShiftScan>,
    pub series: Vec<SeriesSummary>,
    pub config: CampaignConfig,
}

impl CampaignSummary {
    /// Statistics of one quadrature, `"x"` or `"y"`.
    pub fn quadrature(&self, name: &str) -> Result<&ShiftStatistics> {
        let s = match name {
            "x" | "X" => self.shift_x.as_ref(),
            "y" | "Y" => self.shift_y.as_ref(),
            other => return Err(Error::InvalidConfig(format!("unknown quadrature {other:?}"))),
        };
        s.ok_or_else(|| Error::UncalibratedCampaign(format!("no {name} statistics in summary")))
    }
}

fn stats(fits: &[ShiftFit], cfg: &CampaignConfig) -> Option<ShiftStatistics> {
    aggregate_shifts(fits, cfg.binning()).ok()
}

pub fn summarize(cfg: &CampaignConfig, analyses: &[SeriesAnalysis]) -> CampaignSummary {
    let mut all_x = Vec::new();
    let mut all_y = Vec::new();
    let mut series = Vec::new();
    for a in analyses {
        let (fx, fy) = a.shift_fits();
        let scale = 1.0 / (2.0 * PI);
        let sf = a.series_fit.as_ref();
        series.push(SeriesSummary {
            series_index: a.series_index,
            probe_detuning_hz: a.probe_detuning_hz,
            alpha_sq: a.alpha_sq,
            n_groups: a.groups.len(),
            n_failed: a.failures.len(),
            f_m_hz: sf.map(|f| f.f_m),
            f_m_std_hz: sf.map(|f| f.std(2)),
            width_hz: sf.map(|f| f.gamma_eff() * scale),
            width_std_hz: sf.map(|f| f.gamma_eff_std() * scale),
            null_damping: a.null_damping,
            shift_x: stats(&fx, cfg),
            shift_y: stats(&fy, cfg),
        });
        all_x.extend(fx);
        all_y.extend(fy);
    }
    let mut detunings: Vec<f64> = analyses.iter().map(|a| a.probe_detuning_hz).collect();
    detunings.sort_by(f64::total_cmp);
    detunings.dedup();
    let scan = if detunings.len() >= 2 {
        let fits: Vec<RingdownFit> = analyses.iter().filter_map(|a| a.series_fit.clone()).collect();
        width_vs_shift_scan(&fits).ok()
    } else {
        None
    };
    CampaignSummary {
        tool_version: TOOL_VERSION.into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        n_series: analyses.len(),
        n_groups: all_x.len(),
        n_failed: analyses.iter().map(|a| a.failures.len()).sum(),
        shift_x: stats(&all_x, cfg),
        shift_y: stats(&all_y, cfg),
        scan,
        series,
        config: cfg.clone(),
    }
}

/// Analyzes every series and summarizes the campaign.
pub fn analyze_campaign(datasets: &[Dataset]) -> Result<(Vec<SeriesAnalysis>, CampaignSummary)> {
    let first = datasets
        .first()
        .ok_or_else(|| Error::InsufficientData("campaign has no datasets".into()))?;
    let analyses = datasets.iter().map(analyze_dataset).collect::<Result<Vec<_>>>()?;
    let summary = summarize(&first.config, &analyses);
    Ok((analyses, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::run_campaign;

    #[test]
    fn small_campaign_summary() {
        let mut cfg = CampaignConfig::default();
        cfg.schedule.cycles_per_series = 20;
        cfg.schedule.group_size = 5;
        let ds = run_campaign(&cfg, 2).unwrap();
        let (analyses, summary) = analyze_campaign(&ds).unwrap();
        assert_eq!(analyses.len(), 2);
        assert_eq!(summary.n_groups + summary.n_failed, 8);
        assert_eq!(summary.n_failed, 0);
        let sx = summary.quadrature("x").unwrap();
        assert_eq!(sx.n_samples, 8);
        assert!(summary.scan.is_none());
        assert!(summary.quadrature("z").is_err());
        let json = serde_json::to_string(&summary).unwrap();
        let back: CampaignSummary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, summary);
    }
}
