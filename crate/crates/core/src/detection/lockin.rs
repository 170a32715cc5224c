//! Digital lock-in: mixing with a reference, Butterworth low-pass, decimation.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::detection::synth::Phasor;
use crate::detection::{DetectionConfig, QuadratureRecord, TimeSeries};
use crate::error::{Error, Result};

/// Second-order IIR section in transposed direct form II.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    /// Denominator `1 + a[0] z⁻¹ + a[1] z⁻²`.
    pub a: [f64; 2],
    s1: f64,
    s2: f64,
}

impl Biquad {
    pub fn new(b: [f64; 3], a: [f64; 2]) -> Self {
        Self { b, a, s1: 0.0, s2: 0.0 }
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.s1;
        self.s1 = self.b[1] * x - self.a[0] * y + self.s2;
        self.s2 = self.b[2] * x - self.a[1] * y;
        y
    }

    pub fn reset(&mut self) {
        self.s1 = 0.0;
        self.s2 = 0.0;
    }

    /// Transfer function at `z = e^{iθ}`.
    pub fn response_at(&self, theta: f64) -> Complex64 {
        self.transfer(Complex64::cis(theta))
    }

    /// Transfer function at an arbitrary point `z` of the complex plane.
    pub fn transfer(&self, z: Complex64) -> Complex64 {
        let z1 = z.inv();
        let z2 = z1 * z1;
        (self.b[0] + self.b[1] * z1 + self.b[2] * z2) / (1.0 + self.a[0] * z1 + self.a[1] * z2)
    }
}

/// Butterworth low-pass as a cascade of biquads (bilinear transform with
/// pre-warping, so the −3 dB point is exactly at the corner).
#[derive(Debug, Clone, PartialEq)]
pub struct LowPass {
    sections: Vec<Biquad>,
    sample_rate: f64,
}

impl LowPass {
    pub fn butterworth(order: usize, corner: f64, sample_rate: f64) -> Result<Self> {
        if order == 0 || order > 16 {
            return Err(Error::FilterUnstable(format!("order {order} outside 1..=16")));
        }
        if !(corner > 0.0 && corner < 0.5 * sample_rate) {
            return Err(Error::FilterUnstable(format!(
                "corner {corner} Hz outside (0, {}) Hz",
                0.5 * sample_rate
            )));
        }
        let k = (PI * corner / sample_rate).tan();
        let mut sections = Vec::with_capacity(order.div_ceil(2));
        for i in 0..order / 2 {
            let q = 1.0 / (2.0 * ((2 * i + 1) as f64 * PI / (2 * order) as f64).sin());
            let norm = 1.0 / (1.0 + k / q + k * k);
            let b0 = k * k * norm;
            sections.push(Biquad::new(
                [b0, 2.0 * b0, b0],
                [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm],
            ));
        }
        if order % 2 == 1 {
            let norm = 1.0 / (1.0 + k);
            sections.push(Biquad::new([k * norm, k * norm, 0.0], [(k - 1.0) * norm, 0.0]));
        }
        Ok(Self {
            sections,
            sample_rate,
        })
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        self.sections.iter_mut().fold(x, |v, s| s.process(v))
    }

    pub fn reset(&mut self) {
        self.sections.iter_mut().for_each(Biquad::reset);
    }

    /// Complex gain at frequency `f` Hz.
    pub fn response(&self, f: f64) -> Complex64 {
        let theta = 2.0 * PI * f / self.sample_rate;
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response_at(theta))
    }

    /// Steady-state complex gain for the input `e^{(rate + 2πi f) t}`.
    pub fn response_growing(&self, f: f64, rate: f64) -> Complex64 {
        let z = Complex64::new(rate, 2.0 * PI * f).unscale(self.sample_rate).exp();
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.transfer(z))
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }
}

/// Streaming two-phase demodulator. `X = 2·LP[s cos ω_ref t]`,
/// `Y = 2·LP[s sin ω_ref t]`, with `t` the absolute sample time.
#[derive(Debug, Clone)]
pub struct LockIn {
    reference: Phasor,
    lp_x: LowPass,
    lp_y: LowPass,
    decimation: usize,
    count: usize,
}

impl LockIn {
    pub fn new(det: &DetectionConfig, t0: f64) -> Result<Self> {
        let fs = det.sample_rate;
        if !(det.lockin_ref > 0.0 && det.lockin_ref < PI * fs) {
            return Err(Error::FilterUnstable(format!(
                "reference {:.1} Hz outside (0, Nyquist)",
                det.lockin_ref / (2.0 * PI)
            )));
        }
        if det.decimation == 0 {
            return Err(Error::FilterUnstable("decimation must be at least 1".into()));
        }
        let lp = LowPass::butterworth(det.lockin_filter_order, det.lockin_bandwidth, fs)?;
        Ok(Self {
            reference: Phasor::new(det.lockin_ref, t0, 1.0 / fs),
            lp_x: lp.clone(),
            lp_y: lp,
            decimation: det.decimation,
            count: 0,
        })
    }

    /// Feeds one raw sample; returns `(X, Y)` on samples kept by the decimator.
    #[inline]
    pub fn push(&mut self, s: f64) -> Option<(f64, f64)> {
        let r = self.reference.next();
        let x = self.lp_x.process(2.0 * s * r.re);
        let y = self.lp_y.process(2.0 * s * r.im);
        let keep = self.count % self.decimation == 0;
        self.count += 1;
        keep.then_some((x, y))
    }

    pub fn filter(&self) -> &LowPass {
        &self.lp_x
    }
}

/// Demodulates a raw heterodyne series into lock-in quadratures. Output
/// samples coincide with raw samples `0, d, 2d, …` for decimation `d`.
pub fn lockin_demodulate(ts: &TimeSeries, det: &DetectionConfig) -> Result<QuadratureRecord> {
    if (det.sample_rate * ts.dt - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "series sampled at {} Hz, detection configured for {} Hz",
            ts.sample_rate(),
            det.sample_rate
        )));
    }
    let mut lockin = LockIn::new(det, ts.t0)?;
    let cap = ts.len().div_ceil(det.decimation);
    let mut x = Vec::with_capacity(cap);
    let mut y = Vec::with_capacity(cap);
    for &s in &ts.samples {
        if let Some((a, b)) = lockin.push(s) {
            x.push(a);
            y.push(b);
        }
    }
    let dt = ts.dt * det.decimation as f64;
    QuadratureRecord::new(
        TimeSeries::new(ts.t0, dt, x, ts.metadata.clone())?,
        TimeSeries::new(ts.t0, dt, y, ts.metadata.clone())?,
        0,
    )
}
