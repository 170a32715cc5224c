//! Sideband thermometry of stationary pump-on records.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::detection::{
    coherent_peak_analysis, fit_lorentzian_pair, CoherentEstimate, CoherentPeakOptions,
    DetectionConfig, LorentzFitOptions, LorentzianPairFit, SpectrumEstimate, TimeSeries, Welch,
    Window,
};
use crate::dynamics::purity;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermometryOptions {
    /// Target bin spacing, Hz; the segment length is `fs / resolution`.
    pub resolution_hz: f64,
    pub overlap: f64,
    pub window: Window,
    pub lorentz: LorentzFitOptions,
    pub coherent: CoherentPeakOptions,
}

impl Default for ThermometryOptions {
    fn default() -> Self {
        Self {
            resolution_hz: 200.0,
            overlap: 0.5,
            window: Window::Hann,
            lorentz: LorentzFitOptions::default(),
            coherent: CoherentPeakOptions {
                require_resolved: false,
                ..CoherentPeakOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermometryReport {
    pub n_records: usize,
    pub n_averages: usize,
    pub resolution_hz: f64,
    pub fit: LorentzianPairFit,
    pub ratio: f64,
    pub ratio_std: f64,
    pub n_bar: f64,
    pub n_bar_std: f64,
    pub purity: f64,
    pub purity_std: f64,
    /// Sideband linewidth `Γ_eff/2π`, Hz (mean of both peaks).
    pub width_hz: f64,
    /// `None` when the coherent lines are absent or not significant.
    pub coherent: Option<CoherentEstimate>,
}

/// Welch accumulator restricted to the sideband band, fed one record at a
/// time so long acquisitions never sit in memory at once.
#[derive(Debug)]
pub struct SidebandSpectrum {
    welch: Welch,
    fs: f64,
    band: (f64, f64),
    parts: Vec<SpectrumEstimate>,
}

impl SidebandSpectrum {
    pub fn new(det: &DetectionConfig, options: &ThermometryOptions) -> Result<Self> {
        let fs = det.sample_rate;
        if !(options.resolution_hz > 0.0) {
            return Err(Error::InvalidConfig("thermometry resolution must be positive".into()));
        }
        let segment = (fs / options.resolution_hz).round() as usize;
        let f_exc = det.excitation / (2.0 * PI);
        let d = det.delta_lo / (2.0 * PI);
        Ok(Self {
            welch: Welch::new(segment, options.overlap, options.window)?,
            fs,
            band: (f_exc - 3.0 * d, f_exc + 3.0 * d),
            parts: Vec::new(),
        })
    }

    pub fn push(&mut self, ts: &TimeSeries) -> Result<()> {
        if (ts.sample_rate() - self.fs).abs() > 1e-6 * self.fs {
            return Err(Error::InvalidConfig(format!(
                "record sampled at {} Hz, detection expects {} Hz",
                ts.sample_rate(),
                self.fs
            )));
        }
        let part = self.welch.estimate_band(&ts.samples, self.fs, self.band.0, self.band.1)?;
        self.parts.push(part);
        Ok(())
    }

    pub fn n_records(&self) -> usize {
        self.parts.len()
    }

    pub fn spectrum(&self) -> Result<SpectrumEstimate> {
        SpectrumEstimate::combine(&self.parts)
    }
}

/// Lorentzian-pair thermometry and coherent amplitude from an averaged spectrum.
pub fn thermometry_report(
    spec: &SpectrumEstimate,
    det: &DetectionConfig,
    options: &ThermometryOptions,
    n_records: usize,
) -> Result<ThermometryReport> {
    let fit = fit_lorentzian_pair(spec, det, &options.lorentz)?;
    let (n_bar, n_bar_std) = fit.occupancy()?;
    let p = purity(n_bar)?;
    // dP/dn̄ = −2P²
    let purity_std = 2.0 * p * p * n_bar_std;
    let coherent = match coherent_peak_analysis(spec, &fit, det, &options.coherent) {
        Ok(c) if c.significance >= options.coherent.min_significance => Some(c),
        Ok(_) | Err(Error::PeakNotResolved(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(ThermometryReport {
        n_records,
        n_averages: spec.n_averages,
        resolution_hz: spec.resolution,
        ratio: fit.corrected_ratio,
        ratio_std: fit.ratio_std,
        n_bar,
        n_bar_std,
        purity: p,
        purity_std,
        width_hz: 0.5 * (fit.stokes.width + fit.antistokes.width),
        coherent,
        fit,
    })
}

/// Thermometry over a set of stationary records.
pub fn thermometry<'a, I>(records: I, det: &DetectionConfig, options: &ThermometryOptions) -> Result<ThermometryReport>
where
    I: IntoIterator<Item = &'a TimeSeries>,
{
    let mut acc = SidebandSpectrum::new(det, options)?;
    for ts in records {
        acc.push(ts)?;
    }
    if acc.n_records() == 0 {
        return Err(Error::InsufficientData("no stationary records".into()));
    }
    thermometry_report(&acc.spectrum()?, det, options, acc.n_records())
}
