//! Joint Lorentzian fit of the two motional sidebands on a flat background.
//!
//! The sidebands sit 24 kHz apart with 6 kHz widths, so their tails overlap;
//! fitting them jointly with one shared background avoids the bias of two
//! independent windows. Bins around the coherent lines are masked out.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::detection::{DetectionConfig, SpectrumEstimate};
use crate::error::{Error, Result};
use crate::lsq::{LeastSquaresProblem, LevenbergMarquardt, Solution};
use crate::optomech::occupancy_from_ratio;

/// One-sided Lorentzian of the given area and full width at half maximum.
pub fn lorentzian(f: f64, center: f64, fwhm: f64, area: f64) -> f64 {
    let h = 0.5 * fwhm;
    area * h / PI / ((f - center).powi(2) + h * h)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LorentzFitOptions {
    /// Fit range beyond each sideband centre, Hz (default `Δ_LO/2π`).
    pub margin: Option<f64>,
    /// Half-width of the exclusion band around each coherent line, Hz (default 4 bins).
    pub mask_half_width: Option<f64>,
    /// Force a common width and the nominal `2Δ_LO` separation.
    pub tie_widths: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SidebandPeak {
    /// Hz.
    pub center: f64,
    /// FWHM, Hz; equals `Γ_eff/2π`.
    pub width: f64,
    /// Raw (uncorrected) area, units².
    pub area: f64,
    pub center_std: f64,
    pub width_std: f64,
    pub area_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzianPairFit {
    pub stokes: SidebandPeak,
    pub antistokes: SidebandPeak,
    /// Flat background, units²/Hz.
    pub background: f64,
    pub background_std: f64,
    /// `(c_s A_s) / (c_as A_as)`.
    pub corrected_ratio: f64,
    pub ratio_std: f64,
    pub corrections: (f64, f64),
    /// True when widths and separation were tied.
    pub tied: bool,
    pub n_points: usize,
    pub reduced_chi2: f64,
    /// Parameter covariance in the order
    /// `[background, f_s, w_s, A_s, f_as, w_as, A_as]`.
    pub covariance: Vec<Vec<f64>>,
}

impl LorentzianPairFit {
    pub fn model(&self, f: f64) -> f64 {
        self.background
            + lorentzian(f, self.stokes.center, self.stokes.width, self.stokes.area)
            + lorentzian(f, self.antistokes.center, self.antistokes.width, self.antistokes.area)
    }

    /// Detuning-corrected `(Stokes, anti-Stokes)` areas.
    pub fn corrected_areas(&self) -> (f64, f64) {
        (
            self.corrections.0 * self.stokes.area,
            self.corrections.1 * self.antistokes.area,
        )
    }

    /// Total corrected Lorentzian area of both sidebands.
    pub fn lorentz_area(&self) -> f64 {
        let (s, a) = self.corrected_areas();
        s + a
    }

    pub fn lorentz_area_std(&self) -> f64 {
        let (cs, ca) = self.corrections;
        let c = &self.covariance;
        (cs * cs * c[3][3] + ca * ca * c[6][6] + 2.0 * cs * ca * c[3][6]).max(0.0).sqrt()
    }

    /// Corrected difference Stokes − anti-Stokes and its standard error.
    pub fn asymmetry(&self) -> (f64, f64) {
        let (cs, ca) = self.corrections;
        let (s, a) = self.corrected_areas();
        let c = &self.covariance;
        let var = cs * cs * c[3][3] + ca * ca * c[6][6] - 2.0 * cs * ca * c[3][6];
        (s - a, var.max(0.0).sqrt())
    }

    /// Sideband thermometry `n̄ = 1/(R − 1)` with its propagated error.
    pub fn occupancy(&self) -> Result<(f64, f64)> {
        let n = occupancy_from_ratio(self.corrected_ratio)?;
        let r1 = self.corrected_ratio - 1.0;
        Ok((n, self.ratio_std / (r1 * r1)))
    }
}

struct PairProblem<'a> {
    freqs: &'a [f64],
    data: &'a [f64],
    sigma: Vec<f64>,
    tied_separation: Option<f64>,
}

impl PairProblem<'_> {
    /// Expands parameters into `[bg, f_s, w_s, A_s, f_as, w_as, A_as]`.
    fn full(&self, p: &[f64]) -> [f64; 7] {
        match self.tied_separation {
            None => [p[0], p[1], p[2], p[3], p[4], p[5], p[6]],
            Some(sep) => [p[0], p[1], p[2], p[3], p[1] - sep, p[2], p[4]],
        }
    }

    fn eval(q: &[f64; 7], f: f64) -> f64 {
        q[0] + lorentzian(f, q[1], q[2], q[3]) + lorentzian(f, q[4], q[5], q[6])
    }
}

impl LeastSquaresProblem for PairProblem<'_> {
    fn n_params(&self) -> usize {
        if self.tied_separation.is_some() {
            5
        } else {
            7
        }
    }

    fn n_residuals(&self) -> usize {
        self.freqs.len()
    }

    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let q = self.full(p);
        for i in 0..self.freqs.len() {
            out[i] = (Self::eval(&q, self.freqs[i]) - self.data[i]) / self.sigma[i];
        }
    }

    fn jacobian(&self, p: &[f64], jac: &mut DMatrix<f64>) {
        let q = self.full(p);
        for (i, &f) in self.freqs.iter().enumerate() {
            let inv = 1.0 / self.sigma[i];
            let mut d = [0.0; 7];
            d[0] = 1.0;
            for k in [1usize, 4] {
                let (c, w, a) = (q[k], q[k + 1], q[k + 2]);
                let h = 0.5 * w;
                let u = f - c;
                let den = u * u + h * h;
                d[k + 2] = h / PI / den;
                d[k] = a * h / PI * 2.0 * u / (den * den);
                d[k + 1] = a / (2.0 * PI) * (u * u - h * h) / (den * den);
            }
            match self.tied_separation {
                None => {
                    for j in 0..7 {
                        jac[(i, j)] = d[j] * inv;
                    }
                }
                Some(_) => {
                    jac[(i, 0)] = d[0] * inv;
                    jac[(i, 1)] = (d[1] + d[4]) * inv;
                    jac[(i, 2)] = (d[2] + d[5]) * inv;
                    jac[(i, 3)] = d[3] * inv;
                    jac[(i, 4)] = d[6] * inv;
                }
            }
        }
    }
}

fn moving_average(x: &[f64], half: usize) -> Vec<f64> {
    let n = x.len();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + x[i];
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

fn argmax_near(freqs: &[f64], y: &[f64], center: f64, reach: f64) -> usize {
    let mut best = None::<(usize, f64)>;
    for (i, (&f, &v)) in freqs.iter().zip(y).enumerate() {
        if (f - center).abs() <= reach && best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i).unwrap_or_else(|| {
        freqs
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - center).abs().total_cmp(&(b.1 - center).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    })
}

/// Full width at half height above `floor`, walking outwards from `peak`.
fn half_width(freqs: &[f64], y: &[f64], peak: usize, floor: f64) -> Option<f64> {
    let half = floor + 0.5 * (y[peak] - floor);
    let mut lo = peak;
    while lo > 0 && y[lo] > half {
        lo -= 1;
    }
    let mut hi = peak;
    while hi + 1 < y.len() && y[hi] > half {
        hi += 1;
    }
    (lo > 0 && hi + 1 < y.len()).then(|| freqs[hi] - freqs[lo])
}

/// Least-squares fit of Stokes and anti-Stokes Lorentzians plus a shared flat
/// background around the nominal sideband positions `(Ω_exc ∓ Δ_LO)/2π`.
///
/// Weights follow the χ² statistics of an averaged periodogram (σ ∝ model);
/// the fit is repeated once with weights from the first solution. If the
/// free seven-parameter fit is singular or unphysical (e.g. an empty
/// anti-Stokes sideband at `n̄ = 0`) the widths and separation are tied.
pub fn fit_lorentzian_pair(
    spec: &SpectrumEstimate,
    det: &DetectionConfig,
    options: &LorentzFitOptions,
) -> Result<LorentzianPairFit> {
    let sep = 2.0 * det.delta_lo / (2.0 * PI);
    let f_exc = det.excitation / (2.0 * PI);
    let f_as0 = f_exc - 0.5 * sep;
    let f_s0 = f_exc + 0.5 * sep;
    let margin = options.margin.unwrap_or(0.5 * sep);
    let (lo, hi) = (f_as0 - margin, f_s0 + margin);
    let (f_min, f_max) = (spec.freqs[0], *spec.freqs.last().unwrap_or(&0.0));
    if lo < f_min || hi > f_max {
        return Err(Error::InsufficientData(format!(
            "sideband window ({lo:.0}, {hi:.0}) Hz outside spectrum ({f_min:.0}, {f_max:.0}) Hz"
        )));
    }
    let mask = options.mask_half_width.unwrap_or(4.0 * spec.resolution);
    let mut freqs = Vec::new();
    let mut data = Vec::new();
    let mut all_f = Vec::new();
    let mut all_p = Vec::new();
    for (&f, &p) in spec.freqs.iter().zip(&spec.psd) {
        if f < lo || f > hi {
            continue;
        }
        all_f.push(f);
        all_p.push(p);
        if (f - f_as0).abs() <= mask || (f - f_s0).abs() <= mask {
            continue;
        }
        freqs.push(f);
        data.push(p);
    }
    if freqs.len() < 20 {
        return Err(Error::TooFewSamples {
            got: freqs.len(),
            need: 20,
        });
    }

    let smooth_half = ((500.0 / spec.resolution).round() as usize).max(1);
    let smooth = moving_average(&data, smooth_half);
    let floor = smooth.iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
    let i_s = argmax_near(&freqs, &smooth, f_s0, 0.25 * sep);
    let i_as = argmax_near(&freqs, &smooth, f_as0, 0.25 * sep);
    let width0 = half_width(&freqs, &smooth, i_s, floor)
        .unwrap_or(0.25 * margin)
        .clamp(4.0 * spec.resolution, margin);
    let height_s = (smooth[i_s] - floor).max(f64::MIN_POSITIVE);
    let height_as = (smooth[i_as] - floor).max(0.05 * height_s);
    let area = |h: f64| h * PI * width0 / 2.0;

    let free0 = [
        floor,
        freqs[i_s],
        width0,
        area(height_s),
        freqs[i_as],
        width0,
        area(height_as),
    ];
    let k_eff = spec.n_averages.max(1) as f64;

    let run = |tied: bool| -> Result<(Solution, PairProblem<'_>)> {
        let mut problem = PairProblem {
            freqs: &freqs,
            data: &data,
            sigma: vec![1.0; freqs.len()],
            tied_separation: tied.then_some(sep),
        };
        let p0: Vec<f64> = if tied {
            vec![free0[0], f_s0, free0[2], free0[3], free0[6]]
        } else {
            free0.to_vec()
        };
        let weights = |q: &[f64; 7], problem: &mut PairProblem<'_>| {
            for (i, &f) in freqs.iter().enumerate() {
                let m = PairProblem::eval(q, f).abs().max(1e-3 * floor.max(f64::MIN_POSITIVE));
                problem.sigma[i] = m / k_eff.sqrt();
            }
        };
        let q0 = problem.full(&p0);
        weights(&q0, &mut problem);
        let lm = LevenbergMarquardt::default();
        let first = lm.minimize(&problem, &p0)?;
        let q1 = problem.full(&first.params);
        weights(&q1, &mut problem);
        let sol = lm.minimize(&problem, &first.params)?;
        Ok((sol, problem))
    };

    let plausible = |q: &[f64; 7]| {
        let w_ok = |w: f64| w.abs() > spec.resolution && w.abs() < 4.0 * margin;
        w_ok(q[2])
            && w_ok(q[5])
            && (q[1] - f_s0).abs() < margin
            && (q[4] - f_as0).abs() < margin
    };

    let free = if options.tie_widths {
        None
    } else {
        match run(false) {
            Ok((sol, prob)) if sol.covariance_regular && plausible(&prob.full(&sol.params)) => {
                Some((sol, prob))
            }
            _ => None,
        }
    };
    let (sol, problem, tied) = match free {
        Some((s, p)) => (s, p, false),
        None => {
            let (s, p) = run(true)?;
            (s, p, true)
        }
    };

    let mut q = problem.full(&sol.params);
    // Jacobian of the full parameter vector with respect to the fitted one.
    let n_fit = sol.params.len();
    let mut t = DMatrix::<f64>::zeros(7, n_fit);
    if tied {
        for (row, col) in [(0, 0), (1, 1), (2, 2), (3, 3), (4, 1), (5, 2), (6, 4)] {
            t[(row, col)] = 1.0;
        }
    } else {
        for j in 0..7 {
            t[(j, j)] = 1.0;
        }
    }
    // A negative width with a negative area describes the same curve.
    for (w, a) in [(2usize, 3usize), (5, 6)] {
        if q[w] < 0.0 {
            q[w] = -q[w];
            q[a] = -q[a];
            for j in 0..n_fit {
                t[(w, j)] = -t[(w, j)];
                t[(a, j)] = -t[(a, j)];
            }
        }
    }
    let cov = &t * &sol.covariance * t.transpose();
    if q.iter().any(|v| !v.is_finite()) || !(q[3] > 0.0) {
        return Err(Error::FitDiverged(format!("sideband fit produced {q:?}")));
    }
    let sd = |j: usize| cov[(j, j)].max(0.0).sqrt();
    let peak = |k: usize| SidebandPeak {
        center: q[k],
        width: q[k + 1],
        area: q[k + 2],
        center_std: sd(k),
        width_std: sd(k + 1),
        area_std: sd(k + 2),
    };

    let (cs, ca) = det.detuning_correction;
    let ratio = cs * q[3] / (ca * q[6]);
    // ∂R/∂A_s = R/A_s, ∂R/∂A_as = −R/A_as
    let gs = ratio / q[3];
    let ga = -ratio / q[6];
    let ratio_var = gs * gs * cov[(3, 3)] + ga * ga * cov[(6, 6)] + 2.0 * gs * ga * cov[(3, 6)];

    Ok(LorentzianPairFit {
        stokes: peak(1),
        antistokes: peak(4),
        background: q[0],
        background_std: sd(0),
        corrected_ratio: ratio,
        ratio_std: ratio_var.max(0.0).sqrt(),
        corrections: (cs, ca),
        tied,
        n_points: freqs.len(),
        reduced_chi2: sol.reduced_chi2(freqs.len()),
        covariance: (0..7).map(|i| (0..7).map(|j| cov[(i, j)]).collect()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lorentzian_integrates_to_area() {
        let (c, w, a) = (1000.0, 60.0, 2.5);
        let df = 0.01;
        let sum: f64 = (-2_000_000..2_000_000)
            .map(|k| lorentzian(c + k as f64 * df, c, w, a) * df)
            .sum();
        // tails beyond ±20 kHz hold w/(2π·20k)·2 of the area
        assert!((sum / a - 1.0).abs() < 2e-3);
        assert!((lorentzian(c + 30.0, c, w, a) / lorentzian(c, c, w, a) - 0.5).abs() < 1e-12);
    }

    fn synthetic(det: &DetectionConfig, n_s: f64, n_as: f64) -> SpectrumEstimate {
        let f0 = det.excitation / (2.0 * PI);
        let d = det.delta_lo / (2.0 * PI);
        let res = 50.0;
        let freqs: Vec<f64> = (0..2000).map(|k| f0 - 50e3 + k as f64 * res).collect();
        let psd = freqs
            .iter()
            .map(|&f| 1e-4 + lorentzian(f, f0 + d, 6e3, n_s) + lorentzian(f, f0 - d, 6e3, n_as))
            .collect();
        SpectrumEstimate {
            freqs,
            psd,
            resolution: res,
            n_averages: 1000,
        }
    }

    #[test]
    fn noiseless_pair_is_recovered() {
        let det = DetectionConfig::for_excitation(2.0 * PI * 525.8e3);
        let fit = fit_lorentzian_pair(&synthetic(&det, 6.0, 5.0), &det, &Default::default()).unwrap();
        assert!(!fit.tied);
        assert!((fit.corrected_ratio - 1.2).abs() < 1e-8);
        assert!((fit.stokes.width - 6e3).abs() < 1e-5);
        assert!((fit.antistokes.width - 6e3).abs() < 1e-5);
        assert!((fit.background - 1e-4).abs() < 1e-12);
        assert!((fit.occupancy().unwrap().0 - 5.0).abs() < 1e-6);
    }

    #[test]
    fn empty_antistokes_falls_back_to_tied_fit() {
        let det = DetectionConfig::for_excitation(2.0 * PI * 525.8e3);
        let fit = fit_lorentzian_pair(&synthetic(&det, 1.0, 0.0), &det, &Default::default()).unwrap();
        assert!(fit.antistokes.area.abs() < 1e-8);
        assert!((fit.stokes.area - 1.0).abs() < 1e-8);
    }

    #[test]
    fn corrections_scale_ratio() {
        let mut det = DetectionConfig::for_excitation(2.0 * PI * 525.8e3);
        det.detuning_correction = (1.1, 0.9);
        let fit = fit_lorentzian_pair(&synthetic(&det, 1.0, 1.0), &det, &Default::default()).unwrap();
        assert!((fit.corrected_ratio - 1.1 / 0.9).abs() < 1e-8);
    }

    #[test]
    fn window_outside_support() {
        let det = DetectionConfig::for_excitation(2.0 * PI * 525.8e3);
        let mut s = synthetic(&det, 1.0, 1.0);
        s.freqs.truncate(800);
        s.psd.truncate(800);
        assert!(matches!(
            fit_lorentzian_pair(&s, &det, &Default::default()),
            Err(Error::InsufficientData(_))
        ));
    }
}
