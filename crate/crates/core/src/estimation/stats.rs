//! Ensemble statistics of the fitted initial shifts.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimation::ShiftFit;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Binning {
    Count(usize),
    Width(f64),
}

impl Default for Binning {
    fn default() -> Self {
        Binning::Count(25)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], binning: Binning) -> Result<Self> {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::InsufficientData("histogram needs finite values".into()));
        }
        let edges: Vec<f64> = match binning {
            Binning::Count(0) => {
                return Err(Error::InvalidConfig("histogram needs at least one bin".into()))
            }
            Binning::Width(w) if !(w > 0.0) => {
                return Err(Error::InvalidConfig(format!("bin width {w} must be positive")))
            }
            _ if hi == lo => vec![lo - 0.5, lo + 0.5],
            Binning::Count(n) => (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect(),
            Binning::Width(w) => {
                let first = (lo / w).floor();
                let n = ((hi / w).floor() - first) as usize + 1;
                (0..=n).map(|i| (first + i as f64) * w).collect()
            }
        };
        let nb = edges.len() - 1;
        let mut counts = vec![0; nb];
        for &v in values {
            let i = edges.partition_point(|&e| e <= v).saturating_sub(1).min(nb - 1);
            counts[i] += 1;
        }
        Ok(Self { edges, counts })
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftStatistics {
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub std: f64,
    pub n_samples: usize,
    pub histogram: Histogram,
}

impl ShiftStatistics {
    pub fn standard_error(&self) -> f64 {
        self.std / (self.n_samples as f64).sqrt()
    }

    /// `mean / (std/√n)`; zero when both vanish.
    pub fn z_score(&self) -> f64 {
        let se = self.standard_error();
        if se == 0.0 {
            if self.mean == 0.0 {
                0.0
            } else {
                f64::INFINITY.copysign(self.mean)
            }
        } else {
            self.mean / se
        }
    }

    /// Two-sided p-value of the null-shift hypothesis.
    pub fn p_value(&self) -> f64 {
        let normal = Normal::standard();
        2.0 * normal.sf(self.z_score().abs())
    }

    /// True when `|mean| ≤ n_sigma · std/√n`.
    pub fn compatible_with_null(&self, n_sigma: f64) -> bool {
        self.z_score().abs() <= n_sigma
    }

    /// `|mean| + 2·std/√n`.
    pub fn upper_limit(&self) -> f64 {
        self.mean.abs() + 2.0 * self.standard_error()
    }
}

/// Mean, sample standard deviation (two-pass) and histogram of `values`.
pub fn aggregate_values(values: &[f64], binning: Binning) -> Result<ShiftStatistics> {
    let n = values.len();
    if n < 2 {
        return Err(Error::TooFewSamples { got: n, need: 2 });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    Ok(ShiftStatistics {
        mean,
        std: var.sqrt(),
        n_samples: n,
        histogram: Histogram::new(values, binning)?,
    })
}

pub fn aggregate_shifts(fits: &[ShiftFit], binning: Binning) -> Result<ShiftStatistics> {
    let values: Vec<f64> = fits.iter().map(|f| f.delta_fm0).collect();
    aggregate_values(&values, binning)
}
