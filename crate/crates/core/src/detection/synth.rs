//! Statistical synthesis of the heterodyne output.
//!
//! Each motional sideband is a complex Ornstein–Uhlenbeck envelope riding on
//! its carrier, so its one-sided PSD is a Lorentzian of FWHM `Γ/2π` whose
//! area is `sideband_gain` times its phonon weight. The coherent motion adds
//! the same complex amplitude `α` to both envelopes.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::detection::{DetectionConfig, Provenance, TimeSeries};
use crate::dynamics::MechanicalMode;
use crate::error::{Error, Result};
use crate::optomech::CooledState;
use crate::rng::generator;

/// Circular complex normal with `E|z|² = 1`.
pub(crate) fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Exact discretization of `dz = (−Γ/2 + iδ) z dt + √D dW` on a fixed step.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ComplexOu {
    pub z: Complex64,
    decay: Complex64,
    kick: f64,
}

impl ComplexOu {
    /// `gamma` is the energy decay rate, `diffusion` the growth rate of `E|z|²`.
    pub fn new(z: Complex64, gamma: f64, detuning: f64, diffusion: f64, dt: f64) -> Self {
        let mut ou = Self {
            z,
            decay: Complex64::new(0.0, 0.0),
            kick: 0.0,
        };
        ou.retune(gamma, detuning, diffusion, dt);
        ou
    }

    /// Starts from the stationary law of variance `variance` (requires `gamma > 0`).
    pub fn stationary<R: Rng + ?Sized>(
        gamma: f64,
        detuning: f64,
        variance: f64,
        dt: f64,
        rng: &mut R,
    ) -> Self {
        let z = complex_normal(rng) * variance.max(0.0).sqrt();
        Self::new(z, gamma, detuning, gamma * variance, dt)
    }

    pub fn retune(&mut self, gamma: f64, detuning: f64, diffusion: f64, dt: f64) {
        self.decay = Complex64::from_polar((-0.5 * gamma * dt).exp(), detuning * dt);
        // E|z|² gains D(1 − e^{−Γdt})/Γ per step.
        let x = gamma * dt;
        let gain = if x.abs() < 1e-9 {
            diffusion * dt * (1.0 - 0.5 * x)
        } else {
            diffusion * (-(-x).exp_m1()) / gamma
        };
        self.kick = gain.max(0.0).sqrt();
    }

    #[inline]
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.z = self.decay * self.z + complex_normal(rng) * self.kick;
    }
}

/// `e^{iωt}` on a uniform grid, recomputed exactly every few thousand steps.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Phasor {
    omega: f64,
    t0: f64,
    dt: f64,
    k: u64,
    value: Complex64,
    rot: Complex64,
}

impl Phasor {
    const RESYNC: u64 = 4096;

    pub fn new(omega: f64, t0: f64, dt: f64) -> Self {
        Self {
            omega,
            t0,
            dt,
            k: 0,
            value: Complex64::cis(omega * t0),
            rot: Complex64::cis(omega * dt),
        }
    }

    /// Returns the value at the current sample and advances.
    #[inline]
    pub fn next(&mut self) -> Complex64 {
        let v = self.value;
        self.k += 1;
        if self.k % Self::RESYNC == 0 {
            let t = self.t0 + self.k as f64 * self.dt;
            self.value = Complex64::cis((self.omega * t).rem_euclid(2.0 * PI));
        } else {
            self.value *= self.rot;
        }
        v
    }
}

/// Stationary heterodyne output of the cooled, coherently driven oscillator.
///
/// Anti-Stokes sideband at `Ω_exc − Δ_LO` with weight `n̄`, Stokes at
/// `Ω_exc + Δ_LO` with weight `n̄ + 1`, both offset by `Ω_eff − Ω_exc` and of
/// width `Γ_eff`; coherent lines of power `sideband_gain·|α|²` each at
/// `Ω_exc ∓ Δ_LO`; flat background. Sideband powers are divided by the
/// configured detuning-correction factors, so the corrected areas recover
/// the true weights.
pub fn synthesize_bhd(
    state: &CooledState,
    mode: &MechanicalMode,
    det: &DetectionConfig,
    duration: f64,
    seed: u64,
) -> Result<TimeSeries> {
    det.validate(mode.omega_m)?;
    state.validate(mode)?;
    if !(duration * state.gamma_eff >= 10.0) {
        return Err(Error::DurationTooShort(format!(
            "{duration:e} s covers {:.2} linewidth times, need at least 10",
            duration * state.gamma_eff
        )));
    }
    let fs = det.sample_rate;
    let dt = 1.0 / fs;
    let n = (duration * fs).round() as usize;
    let mut rng = generator(seed, &[]);

    let gain = (2.0 * det.sideband_gain).sqrt();
    let (c_s, c_as) = det.detuning_correction;
    let amp_s = gain / c_s.sqrt();
    let amp_as = gain / c_as.sqrt();
    let offset = state.omega_eff - det.excitation;
    // Both lines see the same thermal motion; the Stokes line adds one
    // independent zero-point quantum on top.
    let mut th = ComplexOu::stationary(state.gamma_eff, offset, state.n_bar, dt, &mut rng);
    let mut zp = ComplexOu::stationary(state.gamma_eff, offset, 1.0, dt, &mut rng);
    let mut carrier_as = Phasor::new(det.excitation - det.delta_lo, 0.0, dt);
    let mut carrier_s = Phasor::new(det.excitation + det.delta_lo, 0.0, dt);
    let sigma_w = (0.5 * det.background_psd * fs).sqrt();

    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let env_as = state.alpha + th.z;
        let env_s = env_as + zp.z;
        let noise: f64 = rng.sample(StandardNormal);
        samples.push(
            amp_as * (env_as * carrier_as.next()).re
                + amp_s * (env_s * carrier_s.next()).re
                + sigma_w * noise,
        );
        th.step(&mut rng);
        zp.step(&mut rng);
    }

    let provenance = Provenance {
        seed: Some(seed),
        config_hash: crate::detection::io::content_hash(&(state, mode, det, duration)),
    };
    TimeSeries::new(0.0, dt, samples, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ou_stationary_variance_is_preserved() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dt = 1e-6;
        let mut ou = ComplexOu::stationary(2e4, 3e3, 7.0, dt, &mut rng);
        let mut acc = 0.0;
        let n = 400_000;
        for _ in 0..n {
            ou.step(&mut rng);
            acc += ou.z.norm_sqr();
        }
        // 400k samples over ~4000 correlation times
        assert!((acc / n as f64 - 7.0).abs() < 0.35, "{}", acc / n as f64);
    }

    #[test]
    fn ou_growth_without_damping_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let runs = 4000;
        let mut acc = 0.0;
        for _ in 0..runs {
            let mut ou = ComplexOu::new(Complex64::new(0.0, 0.0), 0.0, 0.0, 2.0, 1e-3);
            for _ in 0..100 {
                ou.step(&mut rng);
            }
            acc += ou.z.norm_sqr();
        }
        assert!((acc / runs as f64 - 0.2).abs() < 0.02);
    }

    #[test]
    fn phasor_tracks_exact_phase() {
        let omega = 2.0 * PI * 525.8e3;
        let dt = 1.0 / 2.4e6;
        let mut p = Phasor::new(omega, -1e-3, dt);
        let mut last = Complex64::new(0.0, 0.0);
        for _ in 0..100_001 {
            last = p.next();
        }
        let exact = Complex64::cis(omega * (-1e-3 + 100_000.0 * dt));
        assert!((last - exact).norm() < 1e-9);
    }
}
