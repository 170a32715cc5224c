//! End-to-end acceptance suite. Every criterion prints one `PASS`/`FAIL` line
//! with its measured values and pinned tolerance; the test fails if any
//! criterion fails.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use gupsim_core::detection::Provenance;
use gupsim_core::dynamics::{default_step, frequency_vs_amplitude, integrate_trajectory};
use gupsim_core::estimation::{
    beta0_for_shift, beta_bound, fit_ringdown, fit_transient_shift, AmplitudeConvention,
    LineFrequencies, RingdownOptions,
};
use gupsim_core::optomech::{rethermalization_rate, spring_slope};
use gupsim_core::protocol::{
    analyze_campaign, cycle_seed, run_campaign, run_cycle, stationary_segment, thermometry_report,
    CampaignSummary, SeriesPlan, SidebandSpectrum, ThermometryOptions, ThermometryReport,
};
use gupsim_core::rng::generator;
use gupsim_core::{
    CampaignConfig, DeformationParams, MechanicalMode, PhaseState, QuadratureRecord, TimeSeries,
};
use rand::Rng;

const BIN: &str = env!("CARGO_BIN_EXE_gupsim");

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Mean period from linearly interpolated upward zero crossings of `x`.
fn zero_crossing_period(states: &[PhaseState]) -> (f64, usize) {
    let mut crossings = Vec::new();
    for w in states.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.x < 0.0 && b.x >= 0.0 {
            crossings.push(a.t + (b.t - a.t) * (-a.x) / (b.x - a.x));
        }
    }
    let n = crossings.len() - 1;
    ((crossings[n] - crossings[0]) / n as f64, n)
}

fn criterion_1() -> Outcome {
    let mode = MechanicalMode::from_frequency_q(525.8e3, 6.4e6, 1e-10, 9.0).unwrap();
    let a = 2e-15;
    let periods = 2000;
    let dt = default_step(&mode);
    let n_steps = periods * 200 + 50;
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for eps in [1e-4, 1e-3, 1e-2] {
        let m_omega_a = mode.mass * mode.omega_m * a;
        let d = DeformationParams::from_beta_tilde(eps / (m_omega_a * m_omega_a));
        let traj = integrate_trajectory(PhaseState::at_amplitude(a), &mode, &d, dt, n_steps, 0.0, None).unwrap();
        let (period, _) = zero_crossing_period(&traj.states);
        let measured = 2.0 * PI / period;
        let law = frequency_vs_amplitude(&mode, &d, a);
        let closed = mode.omega_m * (1.0 + eps).sqrt();
        let e = rel(law, measured).max(rel(law, closed));
        worst = worst.max(e);
        parts.push(format!("eps={eps:e}: {e:.2e}"));
    }
    let undeformed = frequency_vs_amplitude(&mode, &DeformationParams::none(), a);
    let traj = integrate_trajectory(
        PhaseState::at_amplitude(a),
        &mode,
        &DeformationParams::none(),
        dt,
        n_steps,
        0.0,
        None,
    )
    .unwrap();
    let (p0, _) = zero_crossing_period(&traj.states);
    let e0 = rel(2.0 * PI / p0, mode.omega_m);
    let exact = undeformed == mode.omega_m;
    outcome(
        worst < 1e-6 && e0 < 1e-6 && exact,
        format!(
            "max rel err {worst:.2e} (tol 1e-6; {}), beta0=0: law exact {exact}, timing {e0:.2e}",
            parts.join(", ")
        ),
    )
}

fn criterion_2() -> Outcome {
    let mode = MechanicalMode::from_frequency_q(525.8e3, 6.4e6, 1e-10, 9.0).unwrap();
    let constants = CampaignConfig::default().constants;
    let rate = rethermalization_rate(&mode, &constants);
    let oracle = 1.380_649e-23 * 9.0 / (1.054_571_817e-34 * 6.4e6);
    let per_phonon_us = 1e6 / rate;
    outcome(
        (per_phonon_us - 5.4).abs() <= 0.5 && rel(rate, oracle) < 1e-12,
        format!("one phonon per {per_phonon_us:.3} us (tol 5.4 +- 0.5), rate {rate:.6e}/s"),
    )
}

fn criterion_3() -> Outcome {
    let mut cfg = CampaignConfig::default();
    cfg.seed = 3;
    cfg.cavity.coupling_hz = 40e3;
    let kappa_hz = cfg.cavity.linewidth_hz;
    let steps = [-0.1, -0.05, 0.0, 0.05, 0.1];
    cfg.campaign.n_series = steps.len();
    cfg.campaign.probe_detunings_hz = steps.iter().map(|s| s * kappa_hz).collect();
    cfg.schedule.cycles_per_series = 200;
    let datasets = run_campaign(&cfg, steps.len()).unwrap();
    let (_, summary) = analyze_campaign(&datasets).unwrap();
    let scan = summary.scan.expect("detuning sweep gives a scan");
    let (k, w) = (2.0 * PI * kappa_hz, 2.0 * PI * cfg.mode.frequency_hz);
    let oracle = 2.0 * k * w / (k * k / 4.0 - w * w);
    let theory = spring_slope(&cfg.cavity(), &cfg.mechanical_mode().unwrap());
    let e = rel(scan.slope, theory);
    outcome(
        e <= 0.10 && rel(theory, oracle) < 1e-12 && (theory - 2.673448).abs() < 5e-7,
        format!(
            "slope {:.4} +- {:.4} vs theory {theory:.6}: rel err {e:.3} (tol 0.10)",
            scan.slope, scan.slope_std
        ),
    )
}

fn streamed_thermometry(cfg: &CampaignConfig, n_records: usize) -> ThermometryReport {
    let det = cfg.detection_config();
    let opts = ThermometryOptions::default();
    let mut acc = SidebandSpectrum::new(&det, &opts).unwrap();
    for k in 0..n_records {
        acc.push(&stationary_segment(cfg, k).unwrap()).unwrap();
    }
    thermometry_report(&acc.spectrum().unwrap(), &det, &opts, acc.n_records()).unwrap()
}

fn criterion_4() -> Outcome {
    let mut cfg = CampaignConfig::default();
    cfg.seed = 4;
    assert_eq!((cfg.operating.n_bar, cfg.operating.linewidth_hz), (5.0, 6e3));
    cfg.campaign.stationary_segment_s = 0.5;
    let r = streamed_thermometry(&cfg, 100);
    let purity_ok = r.purity == 1.0 / (1.0 + 2.0 * r.n_bar) && (r.purity - 1.0 / 11.0).abs() < 0.009;
    outcome(
        (r.ratio - 1.2).abs() <= 0.05 && (r.n_bar - 5.0).abs() <= 0.5 && purity_ok,
        format!(
            "50 s: R = {:.4} +- {:.4} (tol 1.2 +- 0.05), n_bar = {:.3} +- {:.3} (tol 5 +- 0.5), purity = {:.4} (1/11 = {:.4})",
            r.ratio,
            r.ratio_std,
            r.n_bar,
            r.n_bar_std,
            r.purity,
            1.0 / 11.0
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut cfg = CampaignConfig::default();
    cfg.seed = 5;
    cfg.operating.n_bar = 6.6;
    cfg.operating.alpha_sq = 35.0;
    let r = streamed_thermometry(&cfg, 20);
    match r.coherent {
        Some(c) => outcome(
            rel(c.alpha_sq, 35.0) <= 0.10,
            format!("alpha^2 = {:.3} (tol 35 +- 10%), n_bar = {:.3}", c.alpha_sq, r.n_bar),
        ),
        None => outcome(false, "coherent peaks not detected".into()),
    }
}

/// Two-line decaying model of the lock-in quadratures, written out directly.
fn two_line_record(p: &[f64; 6], lines: LineFrequencies, dt: f64, n: usize) -> QuadratureRecord {
    let [a, tau, f_m, phi, b, dphi] = *p;
    let (mut x, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for i in 0..n {
        let t = i as f64 * dt;
        let env = a * (-t / tau).exp();
        let t1 = 2.0 * PI * t * (lines.antistokes - f_m) + phi;
        let t2 = 2.0 * PI * t * (lines.stokes + f_m) + phi + dphi;
        x.push(env * (t1.cos() + b * t2.cos()));
        y.push(env * (t1.sin() - b * t2.sin()));
    }
    let ts = |v| TimeSeries::new(0.0, dt, v, Provenance::default()).unwrap();
    QuadratureRecord::new(ts(x), ts(y), 0).unwrap()
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

fn criterion_6() -> Outcome {
    let cfg = CampaignConfig::default();
    let det = cfg.detection_config();
    let lines = LineFrequencies::from_detection(&det);
    let dt = 1.0 / det.output_rate();
    let n = (1.2e-3 / dt).round() as usize;
    let opts = RingdownOptions {
        window: (0.1e-3, 1.0e-3),
        lines,
        ..Default::default()
    };
    let mut rng = generator(6, &[]);
    let mut worst: f64 = 0.0;
    let mut identity = true;
    let mut failed = 0;
    for _ in 0..100 {
        let truth = [
            rng.random_range(0.5..5.0),
            rng.random_range(20e-6..5e-3),
            rng.random_range(-100.0..100.0),
            rng.random_range(-PI..PI),
            rng.random_range(0.1..2.0),
            rng.random_range(-PI..PI),
        ];
        let rec = two_line_record(&truth, lines, dt, n);
        let Ok(fit) = fit_ringdown(&rec, &opts) else {
            failed += 1;
            continue;
        };
        let errs = [
            rel(fit.amplitude, truth[0]),
            rel(fit.tau, truth[1]),
            (fit.f_m - truth[2]).abs() / truth[2].abs().max(1.0),
            angle_diff(fit.phi, truth[3]),
            rel(fit.b, truth[4]),
            angle_diff(fit.delta_phi, truth[5]),
        ];
        worst = errs.iter().fold(worst, |w, e| w.max(*e));
        identity &= fit.gamma_eff() == 2.0 / fit.tau;
    }
    outcome(
        failed == 0 && worst < 1e-6 && identity,
        format!(
            "100 draws, {failed} failed, max rel err {worst:.2e} (tol 1e-6), Gamma_eff = 2/tau exact: {identity}"
        ),
    )
}

fn null_summary() -> CampaignSummary {
    let cfg = CampaignConfig::default();
    assert_eq!(cfg.deformation.beta0, 0.0);
    let datasets = run_campaign(&cfg, 2).unwrap();
    analyze_campaign(&datasets).unwrap().1
}

fn criterion_7(null: &CampaignSummary) -> Outcome {
    let x = null.shift_x.as_ref().unwrap();
    let y = null.shift_y.as_ref().unwrap();
    outcome(
        x.compatible_with_null(2.0) && y.compatible_with_null(2.0) && null.n_groups == 250,
        format!(
            "{} groups: X {:.1} +- {:.1} Hz (z {:.2}), Y {:.1} +- {:.1} Hz (z {:.2}) (tol |z| < 2)",
            null.n_groups,
            x.mean,
            x.standard_error(),
            x.z_score(),
            y.mean,
            y.standard_error(),
            y.z_score()
        ),
    )
}

/// Early-window shift estimate of one noiseless cycle, X and Y.
fn noiseless_shift(cfg: &CampaignConfig) -> (f64, f64) {
    let mut plan = SeriesPlan::new(cfg, 0).unwrap();
    plan.noiseless = true;
    let rec = run_cycle(cfg, &plan, 0, cycle_seed(cfg, 0, 0), false).unwrap().record;
    let a = &cfg.analysis;
    let base = fit_ringdown(&rec, &cfg.ringdown_options(a.base_window_s)).unwrap();
    let (sx, sy) = fit_transient_shift(&rec, &base, (a.early_window_s[0], a.early_window_s[1])).unwrap();
    (sx.delta_fm0, sy.delta_fm0)
}

fn criterion_8(null: &CampaignSummary) -> Outcome {
    let null_y = null.shift_y.as_ref().unwrap();
    let base = CampaignConfig::default();
    let mode = base.mechanical_mode().unwrap();
    let state = base.cooled_state().unwrap();
    let msd = AmplitudeConvention::MeanSquare;
    let a2 = msd.amplitude_sq(&mode, &base.constants, base.operating.alpha_sq, state.n_bar);

    let target = 10.0 * null_y.std;
    let mut inj = base.clone();
    inj.seed = 2;
    inj.deformation.beta0 = beta0_for_shift(&mode, &base.constants, a2, target);
    let predicted = SeriesPlan::new(&inj, 0).unwrap().initial_shift();
    let datasets = run_campaign(&inj, 2).unwrap();
    let (_, summary) = analyze_campaign(&datasets).unwrap();
    let y = summary.shift_y.as_ref().unwrap();
    let bound = beta_bound(null_y, &state, &mode, &base.constants, base.operating.alpha_sq, msd).unwrap();

    // The early-window estimator is first order in the phase; at this
    // injection the phase excursion over the window is no longer small, so
    // the estimate is reported next to the noiseless pipeline output.
    let (_, clean) = noiseless_shift(&inj);
    let (_, clean0) = noiseless_shift(&base);
    outcome(
        y.z_score().abs() > 5.0 && bound.beta0 < inj.deformation.beta0,
        format!(
            "beta0 {:.3e}, predicted {predicted:.0} Hz (10 x null Y std {:.0} Hz): \
             Y {:.1} +- {:.1} Hz, |z| {:.2} (tol > 5), noiseless pipeline {:.0} Hz; \
             null bound {:.3e} < injected",
            inj.deformation.beta0,
            null_y.std,
            y.mean,
            y.standard_error(),
            y.z_score().abs(),
            clean - clean0,
            bound.beta0
        ),
    )
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let name = p.strip_prefix(dir).unwrap().display().to_string();
                files.push((name, fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn criterion_9() -> Outcome {
    let work = tempfile::tempdir().unwrap();
    let cfg = work.path().join("det.toml");
    fs::write(
        &cfg,
        "seed = 9\n[schedule]\ncycles_per_series = 50\n\
         [campaign]\nn_series = 2\nstationary_segments = 2\nstationary_segment_s = 0.1\n",
    )
    .unwrap();
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .map(|r| {
            let out = work.path().join(r);
            let status = Command::new(BIN)
                .args(["simulate", "--config", cfg.to_str().unwrap(), "--seed", "9"])
                .arg("--out")
                .arg(&out)
                .output()
                .unwrap()
                .status;
            assert!(status.success());
            tree(&out)
        })
        .collect();
    let same = runs[0] == runs[1];
    let bytes: usize = runs[0].iter().map(|(_, d)| d.len()).sum();
    outcome(
        same && !runs[0].is_empty(),
        format!("{} files, {bytes} bytes, identical: {same}", runs[0].len()),
    )
}

fn run(n: usize, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        outcome(false, format!("panicked: {msg}"))
    });
    let verdict = if o.pass { "PASS" } else { "FAIL" };
    // written past the test harness capture so the verdicts always show
    let mut out = std::io::stdout().lock();
    writeln!(out, "\ncriterion {n}: {verdict} [{:.1} s] {}", start.elapsed().as_secs_f64(), o.detail).unwrap();
    o.pass
}

#[test]
fn acceptance() {
    let mut pass = vec![
        run(1, criterion_1),
        run(2, criterion_2),
        run(3, criterion_3),
        run(4, criterion_4),
        run(5, criterion_5),
        run(6, criterion_6),
    ];
    let mut null = None;
    pass.push(run(7, || {
        let s = null_summary();
        let o = criterion_7(&s);
        null = Some(s);
        o
    }));
    pass.push(match &null {
        Some(s) => run(8, || criterion_8(s)),
        None => run(8, || outcome(false, "needs the null campaign of criterion 7".into())),
    });
    pass.push(run(9, criterion_9));
    let failed: Vec<_> = pass.iter().enumerate().filter(|(_, p)| !**p).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
