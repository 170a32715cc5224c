use std::f64::consts::PI;

use gupsim_core::optomech::{
    occupancy_from_ratio, optical_damping_and_spring, rethermalization_rate, rethermalize,
    rethermalize_linear, sideband_ratio, sideband_weights, spring_slope,
};
use gupsim_core::{MechanicalMode, OpticalCavity, PhysicalConstants};
use proptest::prelude::*;

fn mode() -> MechanicalMode {
    MechanicalMode::from_frequency_q(525.8e3, 6.4e6, 1e-10, 9.0).unwrap()
}

#[test]
fn reference_slope() {
    let (k, w) = (2.0 * PI * 2.1e6, 2.0 * PI * 525.8e3);
    let oracle = 2.0 * k * w / (k * k / 4.0 - w * w);
    let s = spring_slope(&OpticalCavity::default(), &mode());
    assert!(((s - oracle) / oracle).abs() < 1e-14);
    assert!((s - 2.673448).abs() < 5e-7);
}

#[test]
fn rethermalization_constant() {
    let rate = rethermalization_rate(&mode(), &PhysicalConstants::default());
    let oracle = 1.380_649e-23 * 9.0 / (1.054_571_817e-34 * 6.4e6);
    assert!(((rate - oracle) / oracle).abs() < 1e-14);
    assert!((1e6 / rate - 5.4).abs() < 0.5);
}

#[test]
fn linearization_gap_matches_its_second_order_expansion() {
    let m = mode();
    let c = PhysicalConstants::default();
    let n0 = 5.0;
    for frac in [1e-4, 1e-3, 1e-2, 2e-2, 0.1] {
        let t = frac / m.gamma_m;
        let exact = rethermalize(n0, &m, &c, t);
        let lin = rethermalize_linear(n0, &m, &c, t);
        let err = (lin - exact) / exact;
        // lowest orders of the gap: Γt(n0 + ½) from k_B T/ħΩ ≈ n_th + ½ and
        // the n0 decay, plus (Γt)² n_th / 2 from the curvature
        let n_th = m.thermal_occupancy(&c);
        let predicted = (frac * (n0 + 0.5) + 0.5 * frac * frac * n_th) / exact;
        assert!(((err - predicted) / predicted).abs() < 0.05, "Γt = {frac}: {err:e} vs {predicted:e}");
        if frac <= 0.01 {
            assert!(err < 0.01, "Γt = {frac}: {err:e}");
        }
    }
}

proptest! {
    #[test]
    fn weights_differ_by_one_quantum(n in 0.0f64..1e6) {
        let (s, a) = sideband_weights(n).unwrap();
        prop_assert_eq!(s - a, 1.0);
    }

    #[test]
    fn thermometry_round_trip(n in 1e-3f64..1e3) {
        let back = occupancy_from_ratio(sideband_ratio(n).unwrap()).unwrap();
        prop_assert!(((back - n) / n).abs() < 1e-9 * n.max(1.0));
    }

    #[test]
    fn rethermalization_is_monotone_towards_the_bath(n0 in 0.0f64..1e3, t1 in 0.0f64..1e3, t2 in 0.0f64..1e3) {
        let (m, c) = (mode(), PhysicalConstants::default());
        prop_assume!(t1 < t2);
        let n_th = m.thermal_occupancy(&c);
        let (a, b) = (rethermalize(n0, &m, &c, t1), rethermalize(n0, &m, &c, t2));
        prop_assert!(a <= b && b <= n_th);
    }

    #[test]
    fn damping_and_spring_keep_the_slope(frac in -0.2f64..0.2, g_hz in 0.0f64..1e5) {
        let m = mode();
        let cavity = OpticalCavity { coupling_rate: 2.0 * PI * g_hz, ..OpticalCavity::default() };
        let (gamma, dw) = optical_damping_and_spring(&cavity, &m, frac * cavity.kappa).unwrap();
        if dw != 0.0 {
            let s = spring_slope(&cavity, &m);
            prop_assert!(((gamma / dw - s) / s).abs() < 1e-12);
        } else {
            prop_assert_eq!(gamma, 0.0);
        }
        // cooling side damps
        if frac < 0.0 && g_hz > 0.0 {
            prop_assert!(gamma > 0.0);
        }
    }
}
