//! Campaign configuration: a TOML document with unit-suffixed keys, plus
//! conversions to the internal (SI, rad/s) model types.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::detection::io::content_hash;
use crate::detection::{DetectionConfig, LOCKIN_OFFSET_HZ};
use crate::dynamics::{DeformationParams, MechanicalMode, PhysicalConstants};
use crate::error::{Error, Result};
use crate::estimation::{Binning, LineFrequencies, RingdownOptions, BASE_WINDOW, EARLY_WINDOW};
use crate::optomech::{CooledState, OpticalCavity};

/// Which of the two experimental schemes a campaign follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Only the excitation is switched off; cooling stays on and the
    /// amplitude decays with `Γ_eff` from a stationary cooled state.
    #[serde(rename = "protocol_1_decay")]
    Protocol1Decay,
    /// Cooling and excitation are switched off together; the oscillator
    /// rings down under the probe alone while re-thermalizing.
    #[default]
    #[serde(rename = "protocol_2_pulsed")]
    Protocol2Pulsed,
}

/// How a nonzero β₀ enters the synthesized post-switch-off frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DeformationCoupling {
    /// Shift given by the frequency law at the switch-off amplitude, scaled by
    /// the instantaneous purity relative to its switch-off value, so it fades
    /// as the oscillator re-thermalizes.
    #[default]
    PurityGated,
    /// Shift follows the frequency law at the instantaneous mean-square amplitude.
    Amplitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModeSection {
    pub frequency_hz: f64,
    pub quality_factor: f64,
    pub mass_kg: f64,
    pub bath_temperature_k: f64,
}

impl Default for ModeSection {
    fn default() -> Self {
        Self {
            frequency_hz: 525.8e3,
            quality_factor: 6.4e6,
            mass_kg: 1e-10,
            bath_temperature_k: 9.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CavitySection {
    pub linewidth_hz: f64,
    pub probe_detuning_hz: f64,
    pub cool_detuning_hz: f64,
    /// Probe coupling `g/2π`.
    pub coupling_hz: f64,
}

impl Default for CavitySection {
    fn default() -> Self {
        Self {
            linewidth_hz: 2.1e6,
            probe_detuning_hz: 0.0,
            cool_detuning_hz: -700e3,
            coupling_hz: 200.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DeformationSection {
    pub beta0: f64,
    #[serde(default)]
    pub coupling: DeformationCoupling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionSection {
    pub lo_offset_hz: f64,
    pub lockin_offset_hz: f64,
    pub lockin_bandwidth_hz: f64,
    pub lockin_filter_order: usize,
    pub sample_rate_hz: f64,
    pub decimation: usize,
    /// One-sided white background, units²/Hz.
    pub background_psd: f64,
    /// Raw-output variance per phonon.
    pub sideband_gain: f64,
    /// `[stokes, antistokes]` area correction factors.
    pub detuning_correction: [f64; 2],
}

impl Default for DetectionSection {
    fn default() -> Self {
        let d = DetectionConfig::for_excitation(2.0 * PI * 525.8e3);
        Self {
            lo_offset_hz: d.delta_lo / (2.0 * PI),
            lockin_offset_hz: LOCKIN_OFFSET_HZ,
            lockin_bandwidth_hz: d.lockin_bandwidth,
            lockin_filter_order: d.lockin_filter_order,
            sample_rate_hz: d.sample_rate,
            decimation: d.decimation,
            background_psd: d.background_psd,
            sideband_gain: d.sideband_gain,
            detuning_correction: [1.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolSchedule {
    pub pump_on_s: f64,
    pub measure_s: f64,
    pub cycle_s: f64,
    pub cycles_per_series: usize,
    pub series_duration_s: f64,
    pub group_size: usize,
    /// Pump-on interval synthesized before switch-off to settle the lock-in filter.
    pub preroll_s: f64,
}

impl Default for ProtocolSchedule {
    fn default() -> Self {
        Self {
            pump_on_s: 30e-3,
            measure_s: 10e-3,
            cycle_s: 40e-3,
            cycles_per_series: 1250,
            series_duration_s: 50.0,
            group_size: 10,
            preroll_s: 0.4e-3,
        }
    }
}

impl ProtocolSchedule {
    pub fn n_groups(&self) -> usize {
        self.cycles_per_series / self.group_size
    }

    pub fn validate(&self) -> Result<()> {
        if (self.pump_on_s + self.measure_s - self.cycle_s).abs() > 1e-9 * self.cycle_s {
            return Err(Error::InvalidConfig(format!(
                "cycle {} s differs from pump-on {} s + measure {} s",
                self.cycle_s, self.pump_on_s, self.measure_s
            )));
        }
        if !(self.measure_s > 0.0 && self.pump_on_s > 0.0 && self.preroll_s >= 0.0) {
            return Err(Error::InvalidConfig("schedule durations must be positive".into()));
        }
        if self.preroll_s > self.pump_on_s {
            return Err(Error::InvalidConfig("pre-roll longer than the pump-on stage".into()));
        }
        if self.cycles_per_series == 0 || self.group_size == 0 {
            return Err(Error::InvalidConfig("cycle and group counts must be positive".into()));
        }
        if self.cycles_per_series as f64 * self.cycle_s > self.series_duration_s * (1.0 + 1e-9) {
            return Err(Error::InvalidConfig(format!(
                "{} cycles of {} s do not fit in a {} s series",
                self.cycles_per_series, self.cycle_s, self.series_duration_s
            )));
        }
        Ok(())
    }

    /// Physics-level advisories: stationarity before switch-off and negligible
    /// intrinsic decay during the measurement.
    pub fn warnings(&self, gamma_eff: f64, gamma_m: f64) -> Vec<String> {
        let mut out = Vec::new();
        if self.pump_on_s * gamma_eff < 100.0 {
            out.push(format!(
                "pump-on stage covers only {:.1} cooled damping times",
                self.pump_on_s * gamma_eff
            ));
        }
        if self.measure_s * gamma_m > 0.01 {
            out.push(format!(
                "measurement lasts {:.3} intrinsic damping times",
                self.measure_s * gamma_m
            ));
        }
        out
    }
}

/// Stationary state targets of the cooled, driven oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatingSection {
    pub n_bar: f64,
    /// `Γ_eff/2π`.
    pub linewidth_hz: f64,
    pub alpha_sq: f64,
    /// `(Ω_eff − Ω_m)/2π` from the cooling beam's optical spring.
    #[serde(default)]
    pub spring_shift_hz: f64,
    #[serde(default)]
    pub excitation_phase_rad: f64,
}

impl Default for OperatingSection {
    fn default() -> Self {
        Self {
            n_bar: 5.0,
            linewidth_hz: 6e3,
            alpha_sq: 35.0,
            spring_shift_hz: 0.0,
            excitation_phase_rad: 0.0,
        }
    }
}

/// Out-of-band membrane modes rung up by the switch-off step, each an
/// impulse response `a e^{−t/τ} sin(2πft)` starting at switch-off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpuriousMode {
    pub frequency_hz: f64,
    /// Raw-output amplitude at switch-off.
    pub amplitude: f64,
    pub decay_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignSection {
    pub n_series: usize,
    /// Probe detuning per series, Hz; empty uses the cavity value for all.
    #[serde(default)]
    pub probe_detunings_hz: Vec<f64>,
    /// |α|² per series (second protocol sub-campaigns); empty uses the operating value.
    #[serde(default)]
    pub alpha_sq_steps: Vec<f64>,
    /// Per-cycle random-walk step of the excitation phase, rad.
    #[serde(default)]
    pub phase_drift_rad: f64,
    #[serde(default)]
    pub store_raw: bool,
    /// Stationary pump-on heterodyne records written for thermometry.
    #[serde(default)]
    pub stationary_segments: usize,
    #[serde(default = "default_segment_duration")]
    pub stationary_segment_s: f64,
}

fn default_segment_duration() -> f64 {
    0.5
}

impl Default for CampaignSection {
    fn default() -> Self {
        Self {
            n_series: 2,
            probe_detunings_hz: Vec::new(),
            alpha_sq_steps: Vec::new(),
            phase_drift_rad: 0.0,
            store_raw: false,
            stationary_segments: 0,
            stationary_segment_s: default_segment_duration(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub base_window_s: [f64; 2],
    pub early_window_s: [f64; 2],
    /// Window for the fit of the all-cycle average of each series.
    pub series_window_s: [f64; 2],
    pub histogram_bins: usize,
    pub null_damping_limit_hz: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            base_window_s: [BASE_WINDOW.0, BASE_WINDOW.1],
            early_window_s: [EARLY_WINDOW.0, EARLY_WINDOW.1],
            series_window_s: [0.1e-3, 5e-3],
            histogram_bins: 25,
            null_damping_limit_hz: 1.0,
        }
    }
}

/// Every field and section may be omitted; missing values take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub name: String,
    pub seed: u64,
    pub scenario: Scenario,
    pub constants: PhysicalConstants,
    pub mode: ModeSection,
    pub cavity: CavitySection,
    pub deformation: DeformationSection,
    pub detection: DetectionSection,
    pub schedule: ProtocolSchedule,
    pub operating: OperatingSection,
    pub campaign: CampaignSection,
    pub analysis: AnalysisSection,
    pub spurious_modes: Vec<SpuriousMode>,
}

fn default_spurious() -> Vec<SpuriousMode> {
    vec![
        SpuriousMode {
            frequency_hz: 348.2e3,
            amplitude: 2.0,
            decay_s: 2e-3,
        },
        SpuriousMode {
            frequency_hz: 791.5e3,
            amplitude: 2.0,
            decay_s: 2e-3,
        },
    ]
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            name: "reference".into(),
            seed: 1,
            scenario: Scenario::default(),
            constants: PhysicalConstants::default(),
            mode: ModeSection::default(),
            cavity: CavitySection::default(),
            deformation: DeformationSection::default(),
            detection: DetectionSection::default(),
            schedule: ProtocolSchedule::default(),
            operating: OperatingSection::default(),
            campaign: CampaignSection::default(),
            analysis: AnalysisSection::default(),
            spurious_modes: default_spurious(),
        }
    }
}

impl CampaignConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: CampaignConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form; independent of TOML formatting.
    pub fn hash(&self) -> String {
        content_hash(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.constants.validate()?;
        let mode = self.mechanical_mode()?;
        self.cavity().validate()?;
        self.schedule.validate()?;
        self.deformation()?;
        let state = self.cooled_state()?;
        state.validate(&mode)?;
        self.detection_config().validate(mode.omega_m)?;
        if self.campaign.n_series == 0 {
            return Err(Error::InvalidConfig("a campaign needs at least one series".into()));
        }
        for (name, list) in [
            ("probe_detunings_hz", &self.campaign.probe_detunings_hz),
            ("alpha_sq_steps", &self.campaign.alpha_sq_steps),
        ] {
            if !list.is_empty() && list.len() != self.campaign.n_series {
                return Err(Error::InvalidConfig(format!(
                    "{name} has {} entries for {} series",
                    list.len(),
                    self.campaign.n_series
                )));
            }
        }
        if self.campaign.alpha_sq_steps.iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::InvalidConfig("alpha_sq_steps must be non-negative".into()));
        }
        if self.scenario == Scenario::Protocol1Decay && !self.campaign.alpha_sq_steps.is_empty() {
            return Err(Error::InvalidConfig(
                "protocol_1_decay varies the amplitude only through the decay; alpha_sq_steps not allowed"
                    .into(),
            ));
        }
        for d in self.series_detunings() {
            crate::optomech::optical_damping_and_spring(&self.cavity(), &mode, d)?;
        }
        let a = &self.analysis;
        if a.early_window_s[1] > a.base_window_s[0] {
            return Err(Error::WindowOverlap);
        }
        let m = self.schedule.measure_s;
        for w in [a.base_window_s, a.early_window_s, a.series_window_s] {
            if !(w[0] >= 0.0 && w[0] < w[1] && w[1] <= m) {
                return Err(Error::InvalidConfig(format!(
                    "analysis window {w:?} s not inside the {m} s measurement"
                )));
            }
        }
        if a.histogram_bins == 0 {
            return Err(Error::InvalidConfig("histogram needs at least one bin".into()));
        }
        let fs = self.detection.sample_rate_hz;
        let dec = self.detection.decimation as f64;
        let out_samples = m * fs / dec;
        if (out_samples - out_samples.round()).abs() > 1e-6 {
            return Err(Error::InvalidConfig(format!(
                "measurement of {m} s is not a whole number of lock-in output samples"
            )));
        }
        for s in &self.spurious_modes {
            if !(s.frequency_hz > 0.0 && s.frequency_hz < 0.5 * fs && s.decay_s > 0.0) {
                return Err(Error::InvalidConfig(format!("invalid spurious mode {s:?}")));
            }
        }
        Ok(())
    }

    pub fn mechanical_mode(&self) -> Result<MechanicalMode> {
        let m = &self.mode;
        MechanicalMode::from_frequency_q(m.frequency_hz, m.quality_factor, m.mass_kg, m.bath_temperature_k)
    }

    pub fn cavity(&self) -> OpticalCavity {
        let c = &self.cavity;
        OpticalCavity {
            kappa: 2.0 * PI * c.linewidth_hz,
            probe_detuning: 2.0 * PI * c.probe_detuning_hz,
            cool_detuning: 2.0 * PI * c.cool_detuning_hz,
            coupling_rate: 2.0 * PI * c.coupling_hz,
        }
    }

    pub fn deformation(&self) -> Result<DeformationParams> {
        DeformationParams::new(self.deformation.beta0, &self.constants)
    }

    /// Stationary state before switch-off, with the operating |α|².
    pub fn cooled_state(&self) -> Result<CooledState> {
        self.cooled_state_with(self.operating.alpha_sq)
    }

    pub fn cooled_state_with(&self, alpha_sq: f64) -> Result<CooledState> {
        let mode = self.mechanical_mode()?;
        let o = &self.operating;
        if !(alpha_sq >= 0.0) {
            return Err(Error::InvalidConfig(format!("|alpha|^2 = {alpha_sq} must be non-negative")));
        }
        Ok(CooledState {
            n_bar: o.n_bar,
            gamma_eff: 2.0 * PI * o.linewidth_hz,
            omega_eff: mode.omega_m + 2.0 * PI * o.spring_shift_hz,
            alpha: Complex64::from_polar(alpha_sq.sqrt(), o.excitation_phase_rad),
        })
    }

    /// Excitation frequency, chosen equal to the cooled resonance.
    pub fn excitation(&self) -> Result<f64> {
        Ok(self.cooled_state()?.omega_eff)
    }

    pub fn detection_config(&self) -> DetectionConfig {
        let d = &self.detection;
        let excitation = 2.0 * PI * (self.mode.frequency_hz + self.operating.spring_shift_hz);
        DetectionConfig {
            excitation,
            delta_lo: 2.0 * PI * d.lo_offset_hz,
            lockin_ref: excitation - 2.0 * PI * d.lockin_offset_hz,
            lockin_bandwidth: d.lockin_bandwidth_hz,
            lockin_filter_order: d.lockin_filter_order,
            sample_rate: d.sample_rate_hz,
            decimation: d.decimation,
            background_psd: d.background_psd,
            sideband_gain: d.sideband_gain,
            detuning_correction: (d.detuning_correction[0], d.detuning_correction[1]),
        }
    }

    /// Probe detuning of each series, rad/s.
    pub fn series_detunings(&self) -> Vec<f64> {
        let n = self.campaign.n_series;
        if self.campaign.probe_detunings_hz.is_empty() {
            vec![2.0 * PI * self.cavity.probe_detuning_hz; n]
        } else {
            self.campaign.probe_detunings_hz.iter().map(|d| 2.0 * PI * d).collect()
        }
    }

    /// |α|² of each series.
    pub fn series_alpha_sq(&self) -> Vec<f64> {
        let n = self.campaign.n_series;
        if self.campaign.alpha_sq_steps.is_empty() {
            vec![self.operating.alpha_sq; n]
        } else {
            self.campaign.alpha_sq_steps.clone()
        }
    }

    pub fn ringdown_options(&self, window: [f64; 2]) -> RingdownOptions {
        RingdownOptions {
            window: (window[0], window[1]),
            lines: LineFrequencies::from_detection(&self.detection_config()),
            ..Default::default()
        }
    }

    pub fn binning(&self) -> Binning {
        Binning::Count(self.analysis.histogram_bins)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_round_trips() {
        let cfg = CampaignConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml().unwrap();
        let back = CampaignConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn minimal_document_uses_defaults() {
        let cfg = CampaignConfig::from_toml("name = \"x\"\nseed = 7\n").unwrap();
        assert_eq!(cfg.schedule.cycles_per_series, 1250);
        assert_eq!(cfg.schedule.n_groups(), 125);
        assert_eq!(cfg.scenario, Scenario::Protocol2Pulsed);
    }

    #[test]
    fn hash_tracks_content() {
        let a = CampaignConfig::default();
        let mut b = a.clone();
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn inconsistent_schedule_rejected() {
        let mut cfg = CampaignConfig::default();
        cfg.schedule.measure_s = 11e-3;
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        let mut cfg = CampaignConfig::default();
        cfg.campaign.n_series = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = CampaignConfig::default();
        cfg.analysis.early_window_s = [0.0, 2e-4];
        assert!(matches!(cfg.validate(), Err(Error::WindowOverlap)));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(CampaignConfig::from_toml("name = \"x\"\nseed = 1\nbogus = 2\n").is_err());
    }

    #[test]
    fn reference_lock_in_lines() {
        let cfg = CampaignConfig::default();
        let lines = LineFrequencies::from_detection(&cfg.detection_config());
        assert!((lines.antistokes - 8000.0).abs() < 1e-6);
        assert!((lines.stokes - 16000.0).abs() < 1e-6);
    }

    #[test]
    fn schedule_warnings() {
        let s = ProtocolSchedule::default();
        assert!(s.warnings(2.0 * PI * 6e3, 0.5).is_empty());
        assert_eq!(s.warnings(100.0, 10.0).len(), 2);
    }
}
