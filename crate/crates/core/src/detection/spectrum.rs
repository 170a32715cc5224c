//! Averaged-periodogram (Welch) PSD estimation.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::detection::{SpectrumEstimate, TimeSeries};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Rectangular,
    #[default]
    Hann,
    Blackman,
}

impl Window {
    /// Periodic window coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        let nf = n as f64;
        (0..n)
            .map(|i| {
                let x = 2.0 * PI * i as f64 / nf;
                match self {
                    Window::Rectangular => 1.0,
                    Window::Hann => 0.5 - 0.5 * x.cos(),
                    Window::Blackman => 0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos(),
                }
            })
            .collect()
    }
}

/// Reusable Welch estimator: one FFT plan and window for many series.
#[derive(Clone)]
pub struct Welch {
    segment: usize,
    step: usize,
    window: Vec<f64>,
    window_power: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Welch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Welch")
            .field("segment", &self.segment)
            .field("step", &self.step)
            .finish()
    }
}

impl Welch {
    /// `overlap` is the fraction of a segment shared with the next, in `[0, 1)`.
    pub fn new(segment_length: usize, overlap: f64, window: Window) -> Result<Self> {
        if segment_length < 2 {
            return Err(Error::InvalidConfig("segment length must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&overlap) {
            return Err(Error::InvalidConfig(format!("overlap {overlap} outside [0, 1)")));
        }
        let shared = (overlap * segment_length as f64).round() as usize;
        let step = (segment_length - shared).max(1);
        let window = window.coefficients(segment_length);
        let window_power = window.iter().map(|w| w * w).sum();
        let fft = FftPlanner::new().plan_fft_forward(segment_length);
        Ok(Self {
            segment: segment_length,
            step,
            window,
            window_power,
            fft,
        })
    }

    pub fn segment_length(&self) -> usize {
        self.segment
    }

    /// One-sided PSD of `samples` at rate `fs`, keeping bins in `[f_lo, f_hi]`.
    /// Each segment has its mean removed before windowing.
    pub fn estimate_band(
        &self,
        samples: &[f64],
        fs: f64,
        f_lo: f64,
        f_hi: f64,
    ) -> Result<SpectrumEstimate> {
        let n = self.segment;
        if n > samples.len() {
            return Err(Error::SegmentTooLong {
                segment: n,
                len: samples.len(),
            });
        }
        let resolution = fs / n as f64;
        let half = n / 2;
        let k_lo = (f_lo / resolution).ceil().max(0.0) as usize;
        let k_hi = ((f_hi / resolution).floor() as usize).min(half);
        if k_lo > k_hi {
            return Err(Error::InvalidConfig(format!(
                "band ({f_lo}, {f_hi}) Hz contains no bins"
            )));
        }
        let mut acc = vec![0.0; k_hi - k_lo + 1];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut count = 0usize;
        let mut start = 0;
        while start + n <= samples.len() {
            let seg = &samples[start..start + n];
            let mean = seg.iter().sum::<f64>() / n as f64;
            for ((b, &s), &w) in buf.iter_mut().zip(seg).zip(&self.window) {
                *b = Complex64::new((s - mean) * w, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (a, b) in acc.iter_mut().zip(&buf[k_lo..=k_hi]) {
                *a += b.norm_sqr();
            }
            count += 1;
            start += self.step;
        }
        let scale = 1.0 / (fs * self.window_power * count as f64);
        let psd = acc
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let k = k_lo + i;
                let one_sided = if k == 0 || (n % 2 == 0 && k == half) { 1.0 } else { 2.0 };
                one_sided * a * scale
            })
            .collect();
        Ok(SpectrumEstimate {
            freqs: (k_lo..=k_hi).map(|k| k as f64 * resolution).collect(),
            psd,
            resolution,
            n_averages: count,
        })
    }

    pub fn estimate(&self, samples: &[f64], fs: f64) -> Result<SpectrumEstimate> {
        self.estimate_band(samples, fs, 0.0, 0.5 * fs)
    }
}

/// Welch PSD of a series over the full band `[0, fs/2]`.
pub fn welch_psd(
    ts: &TimeSeries,
    segment_length: usize,
    overlap: f64,
    window: Window,
) -> Result<SpectrumEstimate> {
    if segment_length > ts.len() {
        return Err(Error::SegmentTooLong {
            segment: segment_length,
            len: ts.len(),
        });
    }
    Welch::new(segment_length, overlap, window)?.estimate(&ts.samples, ts.sample_rate())
}
