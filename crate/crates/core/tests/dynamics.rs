use std::f64::consts::PI;

use gupsim_core::dynamics::{
    default_step, frequency_vs_amplitude, integrate_trajectory, nonlinearity, purity,
};
use gupsim_core::{DeformationParams, MechanicalMode, PhaseState, PhysicalConstants};
use proptest::prelude::*;

fn mode() -> MechanicalMode {
    MechanicalMode::from_frequency_q(525.8e3, 6.4e6, 1e-10, 9.0).unwrap()
}

const AMPLITUDE: f64 = 2e-15;

fn for_epsilon(m: &MechanicalMode, eps: f64) -> DeformationParams {
    let pm = m.mass * m.omega_m * AMPLITUDE;
    DeformationParams::from_beta_tilde(eps / (pm * pm))
}

fn crossing_frequency(states: &[PhaseState]) -> f64 {
    let mut c = Vec::new();
    for w in states.windows(2) {
        if w[0].x < 0.0 && w[1].x >= 0.0 {
            c.push(w[0].t + (w[1].t - w[0].t) * -w[0].x / (w[1].x - w[0].x));
        }
    }
    let n = c.len() - 1;
    2.0 * PI * n as f64 / (c[n] - c[0])
}

#[test]
fn energy_is_conserved_over_ten_thousand_periods() {
    let m = mode();
    for eps in [0.0, 1e-3, 1e-2] {
        let d = for_epsilon(&m, eps);
        let traj = integrate_trajectory(
            PhaseState::at_amplitude(AMPLITUDE),
            &m,
            &d,
            default_step(&m),
            10_000 * 200,
            0.0,
            None,
        )
        .unwrap();
        let e0 = m.energy(&traj.states[0]);
        let worst = traj
            .states
            .iter()
            .map(|s| ((m.energy(s) - e0) / e0).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-9, "eps {eps}: {worst:e}");
    }
}

#[test]
fn deformed_orbit_lies_on_the_undeformed_ellipse() {
    let m = mode();
    let d = for_epsilon(&m, 1e-2);
    let s0 = PhaseState::new(0.6 * AMPLITUDE, 0.8 * m.mass * m.omega_m * AMPLITUDE, 0.0);
    let traj = integrate_trajectory(s0, &m, &d, default_step(&m), 200 * 50, 0.0, None).unwrap();
    // the undeformed ellipse through s0: (x/A)² + (p/mΩA)² = 1
    let a = AMPLITUDE;
    let pa = m.mass * m.omega_m * a;
    for s in &traj.states {
        let h = (s.x / a).powi(2) + (s.p / pa).powi(2);
        assert!((h - 1.0).abs() < 1e-9, "{h}");
    }
    // same orbit, faster traversal
    let free = integrate_trajectory(s0, &m, &DeformationParams::none(), default_step(&m), 200 * 50, 0.0, None).unwrap();
    assert!(crossing_frequency(&traj.states) > crossing_frequency(&free.states));
}

#[test]
fn undeformed_frequency_is_exact() {
    let m = mode();
    assert_eq!(frequency_vs_amplitude(&m, &DeformationParams::none(), AMPLITUDE), m.omega_m);
    assert_eq!(nonlinearity(&m, &DeformationParams::none(), AMPLITUDE), 0.0);
}

#[test]
fn shift_is_linear_as_beta_vanishes() {
    let m = mode();
    let c = PhysicalConstants::default();
    let a = 1e-13;
    let slope = |b: f64| {
        let d = DeformationParams::new(b, &c).unwrap();
        (frequency_vs_amplitude(&m, &d, a) - m.omega_m) / b
    };
    // first-order coefficient Ω m² Ω² A² (L_p/ħ)² / 2
    let k = c.planck_length / c.hbar;
    let oracle = 0.5 * m.omega_m * (m.mass * m.omega_m * a * k).powi(2);
    let (s1, s2) = (slope(4e28), slope(4e27));
    assert!(((s2 - oracle) / oracle).abs() < ((s1 - oracle) / oracle).abs());
    assert!(((s2 - oracle) / oracle).abs() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn frequency_law_matches_crossing_timing(eps in 1e-5f64..2e-2) {
        let m = mode();
        let d = for_epsilon(&m, eps);
        let traj = integrate_trajectory(
            PhaseState::at_amplitude(AMPLITUDE), &m, &d, default_step(&m), 500 * 200 + 50, 0.0, None,
        ).unwrap();
        let measured = crossing_frequency(&traj.states);
        let law = frequency_vs_amplitude(&m, &d, AMPLITUDE);
        prop_assert!(((law - measured) / law).abs() < 1e-6);
        prop_assert!(((law - m.omega_m * (1.0 + eps).sqrt()) / law).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn purity_decreases_with_occupancy(a in 0.0f64..1e4, b in 0.0f64..1e4) {
        prop_assume!(a < b);
        prop_assert!(purity(a).unwrap() > purity(b).unwrap());
        prop_assert_eq!(purity(a).unwrap(), 1.0 / (1.0 + 2.0 * a));
    }
}

#[test]
fn purity_of_the_ground_state_is_one() {
    assert_eq!(purity(0.0).unwrap(), 1.0);
    assert!(purity(-0.1).is_err());
}
