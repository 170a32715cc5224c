//! Statistical model of the cavity–oscillator interaction: optical damping and
//! spring, cold-damping occupancy, re-thermalization after the pump is
//! switched off, sideband weights and the coherent response.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{purity, MechanicalMode, PhysicalConstants};
use crate::error::{Error, Result};

/// Optical cavity and beam detunings. All rates in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalCavity {
    /// Full linewidth κ.
    pub kappa: f64,
    /// Probe detuning from cavity resonance (laser minus cavity).
    pub probe_detuning: f64,
    /// Cooling tone detuning from cavity resonance.
    pub cool_detuning: f64,
    /// Effective optomechanical coupling `g = g₀√n_cav` of the probe beam.
    pub coupling_rate: f64,
}

impl Default for OpticalCavity {
    fn default() -> Self {
        Self {
            kappa: 2.0 * PI * 2.1e6,
            probe_detuning: 0.0,
            cool_detuning: -2.0 * PI * 700e3,
            coupling_rate: 2.0 * PI * 200.0,
        }
    }
}

impl OpticalCavity {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.coupling_rate >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "cavity linewidth must be positive and coupling non-negative: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Largest |detuning| / κ for which the linear damping–spring relation is used.
pub const LINEAR_REGIME: f64 = 0.2;

/// Ratio `Γ_opt / δΩ_m = 2κΩ_m / ((κ/2)² − Ω_m²)` of the small-detuning regime.
pub fn spring_slope(cavity: &OpticalCavity, mode: &MechanicalMode) -> f64 {
    let k = cavity.kappa;
    let w = mode.omega_m;
    2.0 * k * w / (0.25 * k * k - w * w)
}

/// Optical damping `Γ_opt` and spring shift `δΩ_m` (both rad/s) produced by a
/// beam of the cavity's coupling rate at the given small detuning.
///
/// The damping is the first-order expansion in detuning of the standard
/// two-sideband expression, `Γ_opt = −4 g² κ Ω_m Δ / ((κ/2)² + Ω_m²)²`; the
/// spring shift is then tied to it through [`spring_slope`], so the pair
/// satisfies the proportionality exactly. Both scale with `g²`, i.e. with beam
/// power, and flip sign with the detuning.
pub fn optical_damping_and_spring(
    cavity: &OpticalCavity,
    mode: &MechanicalMode,
    detuning: f64,
) -> Result<(f64, f64)> {
    let limit = LINEAR_REGIME * cavity.kappa;
    if !(detuning.abs() <= limit) {
        return Err(Error::OutsideLinearRegime { detuning, limit });
    }
    let g2 = cavity.coupling_rate * cavity.coupling_rate;
    let k = cavity.kappa;
    let w = mode.omega_m;
    let denom = 0.25 * k * k + w * w;
    let gamma_opt = -4.0 * g2 * k * w * detuning / (denom * denom);
    let delta_omega = gamma_opt / spring_slope(cavity, mode);
    Ok((gamma_opt, delta_omega))
}

/// Coupling rate for which a beam at `detuning` adds optical damping `gamma_opt`.
pub fn coupling_for_damping(
    cavity: &OpticalCavity,
    mode: &MechanicalMode,
    detuning: f64,
    gamma_opt: f64,
) -> Result<f64> {
    let unit = OpticalCavity {
        coupling_rate: 1.0,
        ..*cavity
    };
    let (per_g2, _) = optical_damping_and_spring(&unit, mode, detuning)?;
    let g2 = gamma_opt / per_g2;
    if !(g2 >= 0.0 && g2.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "damping {gamma_opt:e} rad/s has the wrong sign for detuning {detuning:e} rad/s"
        )));
    }
    Ok(g2.sqrt())
}

/// Stationary state of the optically cooled and coherently driven oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CooledState {
    /// Mean thermal phonon number.
    pub n_bar: f64,
    /// Effective (optically broadened) energy damping rate, rad/s.
    pub gamma_eff: f64,
    /// Optically shifted resonance, rad/s.
    pub omega_eff: f64,
    /// Coherent amplitude in phonon units (|α|² phonons).
    pub alpha: Complex64,
}

impl CooledState {
    pub fn alpha_sq(&self) -> f64 {
        self.alpha.norm_sqr()
    }

    pub fn validate(&self, mode: &MechanicalMode) -> Result<()> {
        if !(self.n_bar >= 0.0) {
            return Err(Error::NegativeOccupancy(self.n_bar));
        }
        if !(self.gamma_eff >= mode.gamma_m) {
            return Err(Error::InvalidDamping {
                gamma_eff: self.gamma_eff,
                gamma_m: mode.gamma_m,
            });
        }
        Ok(())
    }

    pub fn report(&self) -> Result<OperatingPoint> {
        Ok(OperatingPoint {
            n_bar: self.n_bar,
            gamma_eff_rad_s: self.gamma_eff,
            omega_eff_rad_s: self.omega_eff,
            alpha_sq: self.alpha_sq(),
            purity: purity(self.n_bar)?,
        })
    }
}

/// Key–value export of an operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub n_bar: f64,
    pub gamma_eff_rad_s: f64,
    pub omega_eff_rad_s: f64,
    pub alpha_sq: f64,
    pub purity: f64,
}

/// Occupancy under cold damping: residual bath contribution plus back-action.
pub fn cooled_occupancy(
    mode: &MechanicalMode,
    constants: &PhysicalConstants,
    gamma_eff: f64,
    n_backaction: f64,
) -> Result<f64> {
    if !(gamma_eff >= mode.gamma_m) {
        return Err(Error::InvalidDamping {
            gamma_eff,
            gamma_m: mode.gamma_m,
        });
    }
    if !(n_backaction >= 0.0) {
        return Err(Error::NegativeOccupancy(n_backaction));
    }
    Ok(mode.thermal_occupancy(constants) * mode.gamma_m / gamma_eff + n_backaction)
}

/// Thermal phonons gained per second right after the cooling is removed, `k_B T / ħ Q`.
pub fn rethermalization_rate(mode: &MechanicalMode, constants: &PhysicalConstants) -> f64 {
    constants.k_b * mode.t_bath / (constants.hbar * mode.quality_factor())
}

/// Mean occupancy a time `t` after switch-off, relaxing towards the bath.
pub fn rethermalize(n0: f64, mode: &MechanicalMode, constants: &PhysicalConstants, t: f64) -> f64 {
    let decay = (-mode.gamma_m * t).exp();
    n0 * decay + mode.thermal_occupancy(constants) * (-(-mode.gamma_m * t).exp_m1())
}

/// Short-time linearization `n̄(0) + (k_B T / ħ Q) t` of [`rethermalize`].
pub fn rethermalize_linear(
    n0: f64,
    mode: &MechanicalMode,
    constants: &PhysicalConstants,
    t: f64,
) -> f64 {
    n0 + rethermalization_rate(mode, constants) * t
}

/// Stokes and anti-Stokes sideband weights `(n̄ + 1, n̄)`.
pub fn sideband_weights(n_bar: f64) -> Result<(f64, f64)> {
    if !(n_bar >= 0.0) {
        return Err(Error::NegativeOccupancy(n_bar));
    }
    Ok((n_bar + 1.0, n_bar))
}

/// Stokes / anti-Stokes ratio `R = (n̄ + 1) / n̄`.
pub fn sideband_ratio(n_bar: f64) -> Result<f64> {
    let (s, a) = sideband_weights(n_bar)?;
    if a == 0.0 {
        return Err(Error::RatioUndefined);
    }
    Ok(s / a)
}

/// Sideband thermometry: `n̄ = 1 / (R − 1)`.
pub fn occupancy_from_ratio(ratio: f64) -> Result<f64> {
    if !(ratio > 1.0) || !ratio.is_finite() {
        return Err(Error::RatioUndefined);
    }
    Ok(1.0 / (ratio - 1.0))
}

/// Linear radiation-pressure response of the coherent amplitude to the
/// excitation tone, anchored at one calibrated point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentCalibration {
    pub reference_db: f64,
    pub reference_alpha_sq: f64,
}

impl Default for CoherentCalibration {
    fn default() -> Self {
        Self {
            reference_db: -60.0,
            reference_alpha_sq: 35.0,
        }
    }
}

/// Strongest excitation-to-cooling tone ratio accepted, dB.
pub const MAX_EXCITATION_DB: f64 = -30.0;

/// Coherent amplitude `|α|²` for an excitation-to-cooling power ratio in dB.
pub fn coherent_amplitude(excitation_db: f64, calibration: &CoherentCalibration) -> Result<f64> {
    if excitation_db > MAX_EXCITATION_DB {
        return Err(Error::ExcitationTooStrong(excitation_db));
    }
    let power = 10f64.powf((excitation_db - calibration.reference_db) / 10.0);
    Ok(calibration.reference_alpha_sq * power)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mode() -> MechanicalMode {
        MechanicalMode::from_frequency_q(525.8e3, 6.4e6, 1e-10, 9.0).unwrap()
    }

    #[test]
    fn resonant_probe_has_no_effect() {
        let (g, s) = optical_damping_and_spring(&OpticalCavity::default(), &mode(), 0.0).unwrap();
        assert_eq!(g, 0.0);
        assert_eq!(s, 0.0);
    }

    #[test]
    fn slope_at_reference_parameters() {
        // 2·2.1·0.5258 / (1.05² − 0.5258²), frequencies in MHz; the 2π factors cancel.
        let expected = 2.0 * 2.1 * 0.5258 / (1.05 * 1.05 - 0.5258 * 0.5258);
        let s = spring_slope(&OpticalCavity::default(), &mode());
        assert!((s - expected).abs() < 1e-12, "{s}");
        assert!((s - 2.673_448).abs() < 1e-6);
    }

    #[test]
    fn sign_and_power_scaling() {
        let c = OpticalCavity::default();
        let m = mode();
        let d = 0.05 * c.kappa;
        let (g1, s1) = optical_damping_and_spring(&c, &m, d).unwrap();
        let (g2, s2) = optical_damping_and_spring(&c, &m, -d).unwrap();
        assert_eq!(g1, -g2);
        assert_eq!(s1, -s2);
        let strong = OpticalCavity {
            coupling_rate: c.coupling_rate * 2f64.sqrt(),
            ..c
        };
        let (g3, _) = optical_damping_and_spring(&strong, &m, d).unwrap();
        assert!((g3 / g1 - 2.0).abs() < 1e-12);
        assert!(g2 > 0.0, "red detuning damps");
    }

    #[test]
    fn outside_linear_regime() {
        let c = OpticalCavity::default();
        let err = optical_damping_and_spring(&c, &mode(), 0.25 * c.kappa).unwrap_err();
        assert!(matches!(err, Error::OutsideLinearRegime { .. }));
    }

    #[test]
    fn operating_width_is_reachable() {
        let c = OpticalCavity::default();
        let m = mode();
        let target = 2.0 * PI * 6e3;
        let g = coupling_for_damping(&c, &m, -0.1 * c.kappa, target).unwrap();
        assert!(g > 0.0 && g.is_finite());
        let (gamma, _) = optical_damping_and_spring(
            &OpticalCavity {
                coupling_rate: g,
                ..c
            },
            &m,
            -0.1 * c.kappa,
        )
        .unwrap();
        assert!((gamma / target - 1.0).abs() < 1e-12);
        assert!(coupling_for_damping(&c, &m, 0.1 * c.kappa, target).is_err());
    }

    #[test]
    fn cooled_occupancy_cases() {
        let c = PhysicalConstants::default();
        let m = mode();
        let nth = m.thermal_occupancy(&c);
        assert_eq!(cooled_occupancy(&m, &c, m.gamma_m, 0.0).unwrap(), nth);
        assert!(matches!(
            cooled_occupancy(&m, &c, 0.5 * m.gamma_m, 0.0),
            Err(Error::InvalidDamping { .. })
        ));
        let huge = cooled_occupancy(&m, &c, 1e30, 0.3).unwrap();
        assert!((huge - 0.3).abs() < 1e-15);

        // Γ_eff/Γ_m = 7.5e4 with the 9 K bath leaves ≈4.75 thermal phonons;
        // the remainder up to n̄ = 5 is back-action.
        let gamma_eff = 7.5e4 * m.gamma_m;
        let residual = nth / 7.5e4;
        assert!((residual - 4.755).abs() < 0.01, "{residual}");
        let n_ba = 5.0 - residual;
        let n = cooled_occupancy(&m, &c, gamma_eff, n_ba).unwrap();
        assert!((n - 5.0).abs() < 1e-12);
        assert!((n_ba - 0.245).abs() < 0.01);
    }

    #[test]
    fn rethermalization_endpoints_and_rate() {
        let c = PhysicalConstants::default();
        let m = mode();
        assert_eq!(rethermalize(5.0, &m, &c, 0.0), 5.0);
        let late = rethermalize(5.0, &m, &c, 1e4 / m.gamma_m);
        assert!((late / m.thermal_occupancy(&c) - 1.0).abs() < 1e-12);
        let per_phonon = 1.0 / rethermalization_rate(&m, &c);
        assert!((per_phonon - 5.43e-6).abs() < 0.02e-6, "{per_phonon}");
    }

    #[test]
    fn sideband_thermometry() {
        assert_eq!(sideband_weights(5.0).unwrap(), (6.0, 5.0));
        assert!((sideband_ratio(5.0).unwrap() - 1.2).abs() < 1e-15);
        assert!((sideband_ratio(1e9).unwrap() - 1.0).abs() < 1e-8);
        assert!(matches!(sideband_ratio(0.0), Err(Error::RatioUndefined)));
        assert!((occupancy_from_ratio(7.6 / 6.6).unwrap() - 6.6).abs() < 1e-12);
        assert!(occupancy_from_ratio(1.0).is_err());
    }

    #[test]
    fn coherent_response() {
        let cal = CoherentCalibration::default();
        assert!((coherent_amplitude(-60.0, &cal).unwrap() - 35.0).abs() < 1e-12);
        let doubled = coherent_amplitude(-60.0 + 10.0 * 2f64.log10(), &cal).unwrap();
        assert!((doubled - 70.0).abs() < 1e-9);
        assert!((coherent_amplitude(-57.0, &cal).unwrap() / 35.0 - 1.995).abs() < 1e-3);
        assert!(coherent_amplitude(-300.0, &cal).unwrap() < 1e-20);
        assert!(matches!(
            coherent_amplitude(-20.0, &cal),
            Err(Error::ExcitationTooStrong(_))
        ));
    }
}
