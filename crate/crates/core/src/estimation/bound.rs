//! Upper limit on the deformation parameter from shift statistics.
//!
//! The frequency law `ω(A) = Ω_m √(1 + β̃ m² Ω_m² A²)` gives, at small
//! nonlinearity, `δf ≈ ε f_m / 2` with `ε = β̃ m² Ω_m² A²`. A shift limit
//! `δf_max = |mean| + 2 std/√n` therefore maps to
//! `β₀ = ε_max ħ² / (L_p² m² Ω_m² A²)` with `ε_max = 2 δf_max / (Ω_m/2π)`.
//! What `A` means for a quantum state is a declared convention.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    frequency_vs_amplitude, DeformationParams, MechanicalMode, PhysicalConstants,
    MAX_BOUND_NONLINEARITY,
};
use crate::error::{Error, Result};
use crate::estimation::ShiftStatistics;
use crate::optomech::CooledState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeConvention {
    /// `A² = 2⟨x²⟩ = 2 x_zpf² (2|α|² + 2n̄ + 1)`: coherent, thermal and zero-point motion.
    #[default]
    MeanSquare,
    /// `A² = 4 x_zpf² |α|²`: peak displacement of the coherent part only.
    Coherent,
}

impl AmplitudeConvention {
    pub fn name(self) -> &'static str {
        match self {
            AmplitudeConvention::MeanSquare => "msd",
            AmplitudeConvention::Coherent => "coherent",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            AmplitudeConvention::MeanSquare => {
                "A^2 = 2 x_zpf^2 (2|alpha|^2 + 2 n_bar + 1) (mean-square displacement)"
            }
            AmplitudeConvention::Coherent => "A^2 = 4 x_zpf^2 |alpha|^2 (coherent peak displacement)",
        }
    }

    /// Squared displacement amplitude, m².
    pub fn amplitude_sq(
        self,
        mode: &MechanicalMode,
        constants: &PhysicalConstants,
        alpha_sq: f64,
        n_bar: f64,
    ) -> f64 {
        let xz2 = mode.x_zpf(constants).powi(2);
        match self {
            AmplitudeConvention::MeanSquare => 2.0 * xz2 * (2.0 * alpha_sq + 2.0 * n_bar + 1.0),
            AmplitudeConvention::Coherent => 4.0 * xz2 * alpha_sq,
        }
    }
}

impl fmt::Display for AmplitudeConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AmplitudeConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "msd" | "mean_square" => Ok(AmplitudeConvention::MeanSquare),
            "coherent" => Ok(AmplitudeConvention::Coherent),
            other => Err(Error::InvalidConfig(format!(
                "unknown amplitude convention {other:?} (expected msd or coherent)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaBound {
    pub beta0: f64,
    pub epsilon_max: f64,
    /// Hz.
    pub delta_f_max: f64,
    /// m².
    pub amplitude_sq: f64,
    pub convention: AmplitudeConvention,
    /// Set when the statistics carry no spread (the bound is then zero and meaningless).
    pub degenerate: bool,
}

/// Frequency shift `(ω(A) − Ω_m)/2π` predicted by the exact law, Hz.
pub fn predicted_shift(mode: &MechanicalMode, d: &DeformationParams, amplitude_sq: f64) -> f64 {
    (frequency_vs_amplitude(mode, d, amplitude_sq.sqrt()) - mode.omega_m) / (2.0 * PI)
}

/// β₀ giving a predicted shift of `delta_f` Hz at the given squared amplitude.
pub fn beta0_for_shift(
    mode: &MechanicalMode,
    constants: &PhysicalConstants,
    amplitude_sq: f64,
    delta_f: f64,
) -> f64 {
    let eps = 2.0 * delta_f / mode.frequency_hz();
    let m_omega = mode.mass * mode.omega_m;
    eps * constants.hbar.powi(2)
        / (constants.planck_length.powi(2) * m_omega * m_omega * amplitude_sq)
}

pub fn beta_bound(
    stats: &ShiftStatistics,
    operating: &CooledState,
    mode: &MechanicalMode,
    constants: &PhysicalConstants,
    alpha_sq: f64,
    convention: AmplitudeConvention,
) -> Result<BetaBound> {
    if stats.n_samples < 2 || !stats.mean.is_finite() || !stats.std.is_finite() {
        return Err(Error::UncalibratedCampaign(format!(
            "statistics unusable (n = {}, mean = {}, std = {})",
            stats.n_samples, stats.mean, stats.std
        )));
    }
    if !(alpha_sq > 0.0 && alpha_sq.is_finite()) {
        return Err(Error::UncalibratedCampaign(format!(
            "coherent amplitude |alpha|^2 = {alpha_sq} must be positive"
        )));
    }
    if !(operating.n_bar >= 0.0) {
        return Err(Error::NegativeOccupancy(operating.n_bar));
    }
    let delta_f_max = stats.upper_limit();
    let epsilon_max = 2.0 * delta_f_max / mode.frequency_hz();
    if epsilon_max > MAX_BOUND_NONLINEARITY {
        return Err(Error::NonPerturbative(epsilon_max));
    }
    let amplitude_sq = convention.amplitude_sq(mode, constants, alpha_sq, operating.n_bar);
    Ok(BetaBound {
        beta0: beta0_for_shift(mode, constants, amplitude_sq, delta_f_max),
        epsilon_max,
        delta_f_max,
        amplitude_sq,
        convention,
        degenerate: stats.std == 0.0,
    })
}
