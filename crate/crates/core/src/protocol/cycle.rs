//! One experimental cycle: a pump-on stationary stretch, switch-off at
//! `t = 0`, then the measurement interval, demodulated on the fly.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::detection::synth::{ComplexOu, Phasor};
use crate::detection::{DetectionConfig, LockIn, Provenance, QuadratureRecord, TimeSeries};
use crate::dynamics::{purity, DeformationParams, MechanicalMode, PhysicalConstants};
use crate::error::Result;
use crate::estimation::{predicted_shift, AmplitudeConvention};
use crate::optomech::{optical_damping_and_spring, CooledState};
use crate::protocol::{CampaignConfig, DeformationCoupling, Scenario};
use crate::rng::{derive_seed, generator};

/// Everything shared by the cycles of one series.
#[derive(Debug, Clone)]
pub struct SeriesPlan {
    pub series_index: usize,
    /// rad/s.
    pub probe_detuning: f64,
    pub alpha_sq: f64,
    pub mode: MechanicalMode,
    pub constants: PhysicalConstants,
    pub deformation: DeformationParams,
    pub coupling: DeformationCoupling,
    pub scenario: Scenario,
    pub state: CooledState,
    pub detection: DetectionConfig,
    /// Energy damping after switch-off, rad/s.
    pub gamma_post: f64,
    /// Mechanical frequency after switch-off, rad/s.
    pub omega_post: f64,
    /// Excitation phase of each cycle, rad.
    pub phases: Vec<f64>,
    pub config_hash: String,
    /// Drops thermal, zero-point and background noise while keeping every
    /// deterministic part of the signal; used for response calibration.
    pub noiseless: bool,
}

impl SeriesPlan {
    pub fn new(cfg: &CampaignConfig, series_index: usize) -> Result<Self> {
        cfg.validate()?;
        let mode = cfg.mechanical_mode()?;
        let probe_detuning = cfg.series_detunings()[series_index];
        let alpha_sq = cfg.series_alpha_sq()[series_index];
        let state = cfg.cooled_state_with(alpha_sq)?;
        let (gamma_post, omega_post) = match cfg.scenario {
            Scenario::Protocol1Decay => (state.gamma_eff, state.omega_eff),
            Scenario::Protocol2Pulsed => {
                let (g, dw) = optical_damping_and_spring(&cfg.cavity(), &mode, probe_detuning)?;
                (mode.gamma_m + g, mode.omega_m + dw)
            }
        };
        // Slow drift of the excitation phase: a random walk across the series.
        let n = cfg.schedule.cycles_per_series;
        let mut rng = generator(cfg.seed, &[series_index as u64, u64::MAX]);
        let mut phi = cfg.operating.excitation_phase_rad;
        let phases = (0..n)
            .map(|_| {
                let v = phi;
                let step: f64 = rng.sample(StandardNormal);
                phi += cfg.campaign.phase_drift_rad * step;
                v
            })
            .collect();
        Ok(Self {
            series_index,
            probe_detuning,
            alpha_sq,
            mode,
            constants: cfg.constants,
            deformation: cfg.deformation()?,
            coupling: cfg.deformation.coupling,
            scenario: cfg.scenario,
            state,
            detection: cfg.detection_config(),
            gamma_post,
            omega_post,
            phases,
            config_hash: cfg.hash(),
            noiseless: false,
        })
    }

    /// Expected lock-in `f_m` after switch-off, Hz.
    pub fn expected_f_m(&self) -> f64 {
        (self.omega_post - self.detection.excitation) / (2.0 * PI)
    }

    /// Mean thermal occupancy `t` after switch-off.
    pub fn occupancy(&self, t: f64) -> f64 {
        let n0 = self.state.n_bar;
        match self.scenario {
            Scenario::Protocol1Decay => n0,
            Scenario::Protocol2Pulsed => {
                // dn/dt = −Γ n + Γ_m n_th
                let g = self.gamma_post;
                let source = self.mode.gamma_m * self.mode.thermal_occupancy(&self.constants);
                let x = g * t;
                let growth = if x.abs() < 1e-12 { t } else { -(-x).exp_m1() / g };
                n0 * (-x).exp() + source * growth
            }
        }
    }

    /// Deformation-induced frequency shift `t` after switch-off, Hz.
    pub fn deformation_shift(&self, t: f64) -> f64 {
        if self.deformation.beta_tilde == 0.0 {
            return 0.0;
        }
        let conv = AmplitudeConvention::MeanSquare;
        let n0 = self.state.n_bar;
        match self.coupling {
            DeformationCoupling::PurityGated => {
                let a2 = conv.amplitude_sq(&self.mode, &self.constants, self.alpha_sq, n0);
                let p0 = purity(n0).unwrap_or(1.0);
                let p = purity(self.occupancy(t)).unwrap_or(p0);
                predicted_shift(&self.mode, &self.deformation, a2) * p / p0
            }
            DeformationCoupling::Amplitude => {
                let coherent = self.alpha_sq * (-self.gamma_post * t).exp();
                let a2 = conv.amplitude_sq(&self.mode, &self.constants, coherent, self.occupancy(t));
                predicted_shift(&self.mode, &self.deformation, a2)
            }
        }
    }

    /// Shift at switch-off, Hz.
    pub fn initial_shift(&self) -> f64 {
        self.deformation_shift(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct CycleOutput {
    pub record: QuadratureRecord,
    /// Raw heterodyne series including the pre-roll, when requested.
    pub raw: Option<TimeSeries>,
}

/// Seed of cycle `cycle_index` in series `series_index`.
pub fn cycle_seed(cfg: &CampaignConfig, series_index: usize, cycle_index: usize) -> u64 {
    derive_seed(cfg.seed, &[series_index as u64, cycle_index as u64])
}

/// Synthesizes and demodulates one cycle.
///
/// Before switch-off the sideband envelopes are stationary (width `Γ_eff`,
/// weights `n̄`, `n̄ + 1`) and the coherent amplitude sits at its driven value.
/// Afterwards damping and frequency take their post-switch-off values, the
/// thermal envelopes diffuse towards the bath and the coherent amplitude
/// decays freely, its phase advanced by the deformation shift. The returned
/// record starts at switch-off and spans exactly the measurement interval.
pub fn run_cycle(
    cfg: &CampaignConfig,
    plan: &SeriesPlan,
    cycle_index: usize,
    seed: u64,
    keep_raw: bool,
) -> Result<CycleOutput> {
    let det = &plan.detection;
    let fs = det.sample_rate;
    let dt = 1.0 / fs;
    let dec = det.decimation;
    let n_pre = ((cfg.schedule.preroll_s * fs / dec as f64).round() as usize) * dec;
    let n_out = (cfg.schedule.measure_s * fs / dec as f64).round() as usize;
    let n_meas = n_out * dec;
    let t0 = -(n_pre as f64) * dt;
    let mut rng = generator(seed, &[]);

    let state = &plan.state;
    let gain = (2.0 * det.sideband_gain).sqrt();
    let (c_s, c_as) = det.detuning_correction;
    let amp_s = gain / c_s.sqrt();
    let amp_as = gain / c_as.sqrt();
    let noise_on = if plan.noiseless { 0.0 } else { 1.0 };
    let sigma_w = noise_on * (0.5 * det.background_psd * fs).sqrt();

    let pre_offset = state.omega_eff - det.excitation;
    let post_offset = plan.omega_post - det.excitation;
    // One thermal envelope drives both lines; the Stokes line alone carries
    // the extra zero-point quantum, which keeps the weights at n̄ + 1 and n̄.
    let (n_th0, n_zp) = (noise_on * state.n_bar, noise_on);
    let mut th = ComplexOu::stationary(state.gamma_eff, pre_offset, n_th0, dt, &mut rng);
    let mut zp = ComplexOu::stationary(state.gamma_eff, pre_offset, n_zp, dt, &mut rng);
    let (diff_th, diff_zp) = match plan.scenario {
        Scenario::Protocol1Decay => (state.gamma_eff * n_th0, state.gamma_eff * n_zp),
        Scenario::Protocol2Pulsed => {
            let n_th = plan.mode.thermal_occupancy(&plan.constants);
            (noise_on * plan.mode.gamma_m * n_th, noise_on * plan.mode.gamma_m)
        }
    };

    let alpha = Complex64::from_polar(plan.alpha_sq.sqrt(), plan.phases[cycle_index]);
    let mut beta = alpha;
    let rot_post = Complex64::from_polar((-0.5 * plan.gamma_post * dt).exp(), post_offset * dt);
    let deformed = plan.deformation.beta_tilde != 0.0;

    let mut carrier_as = Phasor::new(det.excitation - det.delta_lo, t0, dt);
    let mut carrier_s = Phasor::new(det.excitation + det.delta_lo, t0, dt);
    let mut spurious: Vec<(Phasor, f64, f64)> = cfg
        .spurious_modes
        .iter()
        .map(|m| (Phasor::new(2.0 * PI * m.frequency_hz, 0.0, dt), m.amplitude, (-dt / m.decay_s).exp()))
        .collect();

    let mut lockin = LockIn::new(det, t0)?;
    let mut xs = Vec::with_capacity(n_out);
    let mut ys = Vec::with_capacity(n_out);
    let mut raw = keep_raw.then(|| Vec::with_capacity(n_pre + n_meas));

    for k in 0..n_pre + n_meas {
        let post = k >= n_pre;
        if k == n_pre {
            th.retune(plan.gamma_post, post_offset, diff_th, dt);
            zp.retune(plan.gamma_post, post_offset, diff_zp, dt);
        }
        let env_as = beta + th.z;
        let env_s = env_as + zp.z;
        let noise: f64 = rng.sample(StandardNormal);
        let mut s = amp_as * (env_as * carrier_as.next()).re
            + amp_s * (env_s * carrier_s.next()).re
            + sigma_w * noise;
        if post {
            for (ph, a, decay) in spurious.iter_mut() {
                s += *a * ph.next().im;
                *a *= *decay;
            }
        }
        if let Some(r) = raw.as_mut() {
            r.push(s);
        }
        if let Some((x, y)) = lockin.push(s) {
            if post {
                xs.push(x);
                ys.push(y);
            }
        }

        th.step(&mut rng);
        zp.step(&mut rng);
        if post {
            beta *= rot_post;
            if deformed {
                // midpoint of the step just taken
                let t = (k - n_pre) as f64 * dt + 0.5 * dt;
                beta *= Complex64::cis(2.0 * PI * plan.deformation_shift(t) * dt);
            }
        }
    }

    let provenance = Provenance {
        seed: Some(seed),
        config_hash: plan.config_hash.clone(),
    };
    let dt_out = dt * dec as f64;
    let record = QuadratureRecord::new(
        TimeSeries::new(0.0, dt_out, xs, provenance.clone())?,
        TimeSeries::new(0.0, dt_out, ys, provenance.clone())?,
        plan.series_index * cfg.schedule.cycles_per_series + cycle_index,
    )?;
    let raw = match raw {
        Some(r) => Some(TimeSeries::new(t0, dt, r, provenance)?),
        None => None,
    };
    Ok(CycleOutput { record, raw })
}
