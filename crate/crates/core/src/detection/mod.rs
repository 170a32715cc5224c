//! Detection chain: balanced heterodyne output synthesis, lock-in
//! demodulation, spectral estimation and sideband fits.
//!
//! Frequency bookkeeping. The local oscillator sits `Δ_LO` above the probe, so
//! motion at `Ω` beats to `Ω − Δ_LO` (anti-Stokes) and `Ω + Δ_LO` (Stokes) in
//! the heterodyne output. The lock-in reference is `Ω_exc − 4 kHz`; with
//! `Δ_LO = 12 kHz` a tone at `Ω_exc + 2π f_m` therefore lands at
//! `8 kHz − f_m` and `16 kHz + f_m` in the demodulated quadratures.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod coherent;
pub mod io;
mod lockin;
mod lorentz;
mod spectrum;
pub(crate) mod synth;

pub use coherent::{coherent_peak_analysis, CoherentEstimate, CoherentPeakOptions};
pub use lockin::{lockin_demodulate, Biquad, LockIn, LowPass};
pub use lorentz::{fit_lorentzian_pair, LorentzFitOptions, LorentzianPairFit, SidebandPeak};
pub use spectrum::{welch_psd, Welch, Window};
pub use synth::synthesize_bhd;

/// Offset of the lock-in reference below the excitation frequency, Hz.
pub const LOCKIN_OFFSET_HZ: f64 = 4e3;

/// Detection chain settings. Angular quantities in rad/s, rates in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Excitation (drive) frequency Ω_exc, rad/s.
    pub excitation: f64,
    /// Heterodyne LO offset Δ_LO, rad/s.
    pub delta_lo: f64,
    /// Lock-in reference, rad/s.
    pub lockin_ref: f64,
    /// Lock-in low-pass corner, Hz.
    pub lockin_bandwidth: f64,
    pub lockin_filter_order: usize,
    /// Raw (heterodyne) sample rate, Hz.
    pub sample_rate: f64,
    /// Lock-in output decimation factor.
    pub decimation: usize,
    /// One-sided shot-noise floor of the raw output, units²/Hz.
    pub background_psd: f64,
    /// Raw-output variance per phonon of sideband occupation.
    pub sideband_gain: f64,
    /// Multiplicative area corrections (Stokes, anti-Stokes) for residual probe detuning.
    pub detuning_correction: (f64, f64),
}

impl DetectionConfig {
    /// Reference settings for an excitation at `excitation` rad/s.
    pub fn for_excitation(excitation: f64) -> Self {
        Self {
            excitation,
            delta_lo: 2.0 * PI * 12e3,
            lockin_ref: excitation - 2.0 * PI * LOCKIN_OFFSET_HZ,
            lockin_bandwidth: 20e3,
            lockin_filter_order: 4,
            sample_rate: 2.4e6,
            decimation: 8,
            background_psd: 5e-5,
            sideband_gain: 1.0,
            detuning_correction: (1.0, 1.0),
        }
    }

    pub fn output_rate(&self) -> f64 {
        self.sample_rate / self.decimation as f64
    }

    /// Sample rate required for a mode at `omega_m` rad/s.
    pub fn required_sample_rate(omega_m: f64) -> f64 {
        4.0 * (omega_m / (2.0 * PI) + 16e3)
    }

    pub fn validate(&self, omega_m: f64) -> Result<()> {
        let required = Self::required_sample_rate(omega_m);
        if !(self.sample_rate > required) {
            return Err(Error::NyquistViolation {
                sample_rate: self.sample_rate,
                required,
            });
        }
        if !(self.delta_lo > 0.0 && self.delta_lo < 0.1 * omega_m) {
            return Err(Error::InvalidConfig(format!(
                "LO offset {:.1} Hz must be positive and much smaller than the mechanical frequency",
                self.delta_lo / (2.0 * PI)
            )));
        }
        let (cs, ca) = self.detuning_correction;
        if !(cs > 0.0 && ca > 0.0) {
            return Err(Error::InvalidConfig(
                "detuning correction factors must be positive".into(),
            ));
        }
        if self.decimation == 0 {
            return Err(Error::InvalidConfig("decimation must be at least 1".into()));
        }
        if !(self.background_psd >= 0.0 && self.sideband_gain > 0.0) {
            return Err(Error::InvalidConfig(
                "background PSD must be non-negative and sideband gain positive".into(),
            ));
        }
        if !(self.lockin_ref > 0.0 && self.lockin_ref < PI * self.sample_rate) {
            return Err(Error::FilterUnstable(format!(
                "lock-in reference {:.1} Hz outside (0, Nyquist)",
                self.lockin_ref / (2.0 * PI)
            )));
        }
        if !(self.lockin_bandwidth < 0.5 * self.output_rate()) {
            return Err(Error::FilterUnstable(format!(
                "lock-in bandwidth {} Hz not below the output Nyquist {} Hz",
                self.lockin_bandwidth,
                0.5 * self.output_rate()
            )));
        }
        Ok(())
    }
}

/// Where a series came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub config_hash: String,
}

/// Uniformly sampled real series.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<f64>,
    pub metadata: Provenance,
}

impl TimeSeries {
    pub fn new(t0: f64, dt: f64, samples: Vec<f64>, metadata: Provenance) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidConfig(format!("sample interval must be positive, got {dt}")));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t: t0 });
        }
        Ok(Self {
            t0,
            dt,
            samples,
            metadata,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        1.0 / self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// Index range of samples with `start <= t <= end` (half a sample of slack).
    pub fn index_range(&self, start: f64, end: f64) -> std::ops::Range<usize> {
        let eps = 1e-6 * self.dt;
        let lo = ((start - self.t0 - eps) / self.dt).ceil().max(0.0) as usize;
        let hi = (((end - self.t0 + eps) / self.dt).floor() + 1.0).max(0.0) as usize;
        lo.min(self.len())..hi.min(self.len())
    }

    pub fn span(&self) -> (f64, f64) {
        (self.t0, self.time(self.len().saturating_sub(1)))
    }
}

/// Lock-in output quadratures of one measurement cycle (or a group average).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRecord {
    pub x: TimeSeries,
    pub y: TimeSeries,
    pub cycle_index: usize,
}

impl QuadratureRecord {
    pub fn new(x: TimeSeries, y: TimeSeries, cycle_index: usize) -> Result<Self> {
        if x.len() != y.len() || x.t0 != y.t0 || x.dt != y.dt {
            return Err(Error::InvalidConfig(
                "quadratures must share length and timebase".into(),
            ));
        }
        Ok(Self { x, y, cycle_index })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Sample-wise mean of records sharing a timebase; takes the first record's cycle index.
    pub fn average(records: &[&QuadratureRecord]) -> Result<QuadratureRecord> {
        let first = records
            .first()
            .ok_or_else(|| Error::InsufficientData("no records to average".into()))?;
        let n = first.len();
        let mut x = vec![0.0; n];
        let mut y = vec![0.0; n];
        for r in records {
            if r.len() != n || r.x.t0 != first.x.t0 || r.x.dt != first.x.dt {
                return Err(Error::InvalidConfig("records differ in timebase".into()));
            }
            for k in 0..n {
                x[k] += r.x.samples[k];
                y[k] += r.y.samples[k];
            }
        }
        let inv = 1.0 / records.len() as f64;
        x.iter_mut().for_each(|v| *v *= inv);
        y.iter_mut().for_each(|v| *v *= inv);
        let meta = first.x.metadata.clone();
        QuadratureRecord::new(
            TimeSeries::new(first.x.t0, first.x.dt, x, meta.clone())?,
            TimeSeries::new(first.x.t0, first.x.dt, y, meta)?,
            first.cycle_index,
        )
    }
}

/// One-sided power spectral density estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    /// Bin frequencies, Hz, strictly increasing.
    pub freqs: Vec<f64>,
    /// Density, units²/Hz.
    pub psd: Vec<f64>,
    /// Bin spacing, Hz.
    pub resolution: f64,
    /// Number of averaged periodograms.
    pub n_averages: usize,
}

impl SpectrumEstimate {
    /// Average of estimates on the same grid, weighted by their periodogram counts.
    pub fn combine(parts: &[SpectrumEstimate]) -> Result<SpectrumEstimate> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InsufficientData("no spectra to combine".into()))?;
        let total: usize = parts.iter().map(|p| p.n_averages).sum();
        let mut psd = vec![0.0; first.psd.len()];
        for p in parts {
            if p.freqs.len() != first.freqs.len() || p.resolution != first.resolution {
                return Err(Error::InvalidConfig("spectra on different grids".into()));
            }
            let w = p.n_averages as f64 / total as f64;
            for (acc, v) in psd.iter_mut().zip(&p.psd) {
                *acc += w * v;
            }
        }
        Ok(SpectrumEstimate {
            freqs: first.freqs.clone(),
            psd,
            resolution: first.resolution,
            n_averages: total,
        })
    }

    /// Index of the bin nearest to `f`.
    pub fn bin(&self, f: f64) -> usize {
        let k = ((f - self.freqs[0]) / self.resolution).round();
        (k.max(0.0) as usize).min(self.freqs.len() - 1)
    }

    /// `Σ psd · Δf` over bins with `lo <= f <= hi`.
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        self.freqs
            .iter()
            .zip(&self.psd)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, p)| p * self.resolution)
            .sum()
    }
}
