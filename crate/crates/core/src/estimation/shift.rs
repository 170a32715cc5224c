//! Early-time frequency shift from the residuals of the extrapolated ring-down.
//!
//! Right after switch-off a small decaying shift `δf_m(t)` replaces
//! `f_m t → f_m t + ∫₀ᵗ δf_m − ∫₀^∞ δf_m`. To first order in the phase the
//! residual of the base model is `∂Q/∂(f_m t) · (δf_m⁰ t + c)`, which is linear
//! in the two unknowns.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::detection::QuadratureRecord;
use crate::error::{Error, Result};
use crate::estimation::RingdownFit;
use crate::lsq::linear_lstsq;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quadrature {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftFit {
    /// Initial shift δf_m⁰, Hz.
    pub delta_fm0: f64,
    /// Phase-offset parameter, cycles.
    pub c: f64,
    /// Covariance of `[δf_m⁰, c]`.
    pub covariance: [[f64; 2]; 2],
    pub window: (f64, f64),
    pub quadrature: Quadrature,
    pub n_points: usize,
}

impl ShiftFit {
    pub fn delta_fm0_std(&self) -> f64 {
        self.covariance[0][0].max(0.0).sqrt()
    }

    pub fn c_std(&self) -> f64 {
        self.covariance[1][1].max(0.0).sqrt()
    }
}

/// Fits `δf_m⁰` and `c` in both quadratures over `early_window`.
pub fn fit_transient_shift(
    rec: &QuadratureRecord,
    base: &RingdownFit,
    early_window: (f64, f64),
) -> Result<(ShiftFit, ShiftFit)> {
    if !base.is_valid() {
        return Err(Error::BaseFitInvalid(format!(
            "non-finite or degenerate parameters (tau = {:e})",
            base.tau
        )));
    }
    if !(base.amplitude > 0.0) {
        return Err(Error::BaseFitInvalid("zero amplitude".into()));
    }
    let (start, end) = early_window;
    if end > base.window.0 {
        return Err(Error::WindowOverlap);
    }
    let (t_min, t_max) = rec.x.span();
    let slack = 1e-9 * rec.x.dt;
    if !(start < end) || start < t_min - slack || end > t_max + slack {
        return Err(Error::WindowOutOfRange {
            start,
            end,
            t_min,
            t_max,
        });
    }
    let range = rec.x.index_range(start, end);
    let n = range.len();
    if n < 3 {
        return Err(Error::TooFewSamples { got: n, need: 3 });
    }

    let mut design = [DMatrix::zeros(n, 2), DMatrix::zeros(n, 2)];
    let mut resid = [DVector::zeros(n), DVector::zeros(n)];
    for (row, k) in range.enumerate() {
        let t = rec.x.time(k);
        let (mx, my) = base.model(t);
        let (dx, dy) = base.phase_derivative(t);
        design[0][(row, 0)] = dx * t;
        design[0][(row, 1)] = dx;
        design[1][(row, 0)] = dy * t;
        design[1][(row, 1)] = dy;
        resid[0][row] = rec.x.samples[k] - mx;
        resid[1][row] = rec.y.samples[k] - my;
    }

    let solve = |a: &DMatrix<f64>, b: &DVector<f64>, q: Quadrature| -> Result<ShiftFit> {
        let (sol, inv) = linear_lstsq(a, b).ok_or_else(|| {
            Error::BaseFitInvalid("phase derivative vanishes over the early window".into())
        })?;
        let rss = (a * &sol - b).norm_squared();
        let s2 = if n > 2 { rss / (n - 2) as f64 } else { 0.0 };
        Ok(ShiftFit {
            delta_fm0: sol[0],
            c: sol[1],
            covariance: [
                [inv[(0, 0)] * s2, inv[(0, 1)] * s2],
                [inv[(1, 0)] * s2, inv[(1, 1)] * s2],
            ],
            window: early_window,
            quadrature: q,
            n_points: n,
        })
    };
    Ok((
        solve(&design[0], &resid[0], Quadrature::X)?,
        solve(&design[1], &resid[1], Quadrature::Y)?,
    ))
}
