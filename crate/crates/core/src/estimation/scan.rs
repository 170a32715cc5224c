//! Width against frequency shift across series with different probe detunings.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::RingdownFit;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    /// Hz.
    pub f_m: f64,
    pub f_m_std: f64,
    /// `Γ_eff/2π`, Hz.
    pub width: f64,
    pub width_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftScan {
    /// `d(Γ_eff/2π) / d f_m`, dimensionless.
    pub slope: f64,
    pub slope_std: f64,
    /// Hz.
    pub offset: f64,
    pub offset_std: f64,
    pub points: Vec<ScanPoint>,
}

/// Ordinary least-squares line `Γ_eff/2π = slope · f_m + offset`.
pub fn width_vs_shift_scan(fits: &[RingdownFit]) -> Result<ShiftScan> {
    if fits.len() < 2 {
        return Err(Error::DegenerateSpan(format!("{} fit(s), need at least 2", fits.len())));
    }
    let points: Vec<ScanPoint> = fits
        .iter()
        .map(|f| ScanPoint {
            f_m: f.f_m,
            f_m_std: f.std(2),
            width: f.gamma_eff() / (2.0 * PI),
            width_std: f.gamma_eff_std() / (2.0 * PI),
        })
        .collect();
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.f_m).sum::<f64>() / n;
    let my = points.iter().map(|p| p.width).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.f_m - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.f_m - mx) * (p.width - my)).sum();
    let scale = points.iter().map(|p| p.f_m.abs()).fold(1.0, f64::max);
    if !(sxx > (1e-9 * scale).powi(2) * n) {
        return Err(Error::DegenerateSpan("all fits share one frequency".into()));
    }
    let slope = sxy / sxx;
    let offset = my - slope * mx;
    let (slope_std, offset_std) = if points.len() > 2 {
        let rss: f64 = points
            .iter()
            .map(|p| (p.width - slope * p.f_m - offset).powi(2))
            .sum();
        let s2 = rss / (n - 2.0);
        ((s2 / sxx).sqrt(), (s2 * (1.0 / n + mx * mx / sxx)).sqrt())
    } else {
        (0.0, 0.0)
    };
    Ok(ShiftScan {
        slope,
        slope_std,
        offset,
        offset_std,
        points,
    })
}
