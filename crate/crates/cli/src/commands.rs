use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use gupsim_core::detection::io::write_spectrum;
use gupsim_core::estimation::{beta_bound, AmplitudeConvention, ShiftScan};
use gupsim_core::optomech::spring_slope;
use gupsim_core::protocol::store::{
    read_config_snapshot, read_datasets, read_series_file, read_summary, stationary_paths,
    write_datasets, write_fits, write_summary, CONFIG_SNAPSHOT, SUMMARY_REPORT,
};
use gupsim_core::protocol::{
    analyze_campaign, run_campaign, run_stationary, thermometry_report, CampaignSummary,
    SidebandSpectrum, ThermometryOptions,
};
use gupsim_core::{CampaignConfig, Error, Result};
use serde_json::{json, Value};

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("JSON value serializes")
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Format(e.to_string()))
}

fn load_config(path: &Path) -> Result<CampaignConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    CampaignConfig::from_toml(&text)
}

fn brief(summary: &CampaignSummary) -> Value {
    let q = |s: &Option<gupsim_core::ShiftStatistics>| {
        s.as_ref().map(|s| {
            json!({
                "mean_hz": s.mean,
                "std_hz": s.std,
                "standard_error_hz": s.standard_error(),
                "z": s.z_score(),
                "n": s.n_samples,
            })
        })
    };
    json!({
        "n_series": summary.n_series,
        "n_groups": summary.n_groups,
        "n_failed": summary.n_failed,
        "shift_x": q(&summary.shift_x),
        "shift_y": q(&summary.shift_y),
        "scan_slope": summary.scan.as_ref().map(|s| s.slope),
    })
}

pub fn simulate(
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
    series: Option<usize>,
    analyze: bool,
) -> Result<String> {
    let mut cfg = match config {
        Some(p) => load_config(p)?,
        None => CampaignConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = series {
        cfg.campaign.n_series = n;
    }
    cfg.validate()?;
    let datasets = run_campaign(&cfg, cfg.campaign.n_series)?;
    let stationary = run_stationary(&cfg)?;
    write_datasets(out, &datasets, &stationary)?;
    let mut report = json!({
        "out": out.display().to_string(),
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
        "n_series": datasets.len(),
        "n_records": datasets.iter().map(|d| d.records.len()).sum::<usize>(),
        "n_stationary": stationary.len(),
    });
    if analyze {
        let (analyses, summary) = analyze_campaign(&datasets)?;
        write_summary(out, &summary)?;
        write_fits(out, &analyses)?;
        report["summary"] = brief(&summary);
    }
    Ok(pretty(&report))
}

pub fn analyze(dir: &Path) -> Result<String> {
    let datasets = read_datasets(dir)?;
    let (analyses, summary) = analyze_campaign(&datasets)?;
    write_summary(dir, &summary)?;
    write_fits(dir, &analyses)?;
    let mut report = brief(&summary);
    report["summary"] = json!(dir.join(SUMMARY_REPORT).display().to_string());
    Ok(pretty(&report))
}

/// Config for thermometry input: explicit file, else the snapshot of the
/// dataset holding the input, else defaults.
fn thermometry_config(input: &Path, config: Option<&Path>) -> Result<CampaignConfig> {
    if let Some(p) = config {
        return load_config(p);
    }
    let dataset_dir = if input.is_dir() {
        Some(input.to_path_buf())
    } else {
        input.parent().and_then(Path::parent).map(Path::to_path_buf)
    };
    match dataset_dir {
        Some(d) if d.join(CONFIG_SNAPSHOT).is_file() => read_config_snapshot(&d),
        _ => Ok(CampaignConfig::default()),
    }
}

fn thermometry_inputs(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_dir() {
        let paths = stationary_paths(input)?;
        if paths.is_empty() {
            return Err(Error::InsufficientData(format!(
                "{} holds no stationary records",
                input.display()
            )));
        }
        Ok(paths)
    } else {
        Ok(vec![input.to_path_buf()])
    }
}

fn sideband_spectrum(input: &Path, cfg: &CampaignConfig, options: &ThermometryOptions) -> Result<SidebandSpectrum> {
    let mut acc = SidebandSpectrum::new(&cfg.detection_config(), options)?;
    for p in thermometry_inputs(input)? {
        acc.push(&read_series_file(&p)?)?;
    }
    Ok(acc)
}

pub fn thermometry(input: &Path, config: Option<&Path>, resolution: f64) -> Result<String> {
    let cfg = thermometry_config(input, config)?;
    let options = ThermometryOptions {
        resolution_hz: resolution,
        ..ThermometryOptions::default()
    };
    let acc = sideband_spectrum(input, &cfg, &options)?;
    let report = thermometry_report(&acc.spectrum()?, &cfg.detection_config(), &options, acc.n_records())?;
    Ok(pretty(&to_value(&report)?))
}

fn summary_or_analysis(dir: &Path) -> Result<CampaignSummary> {
    let path = dir.join(SUMMARY_REPORT);
    if path.is_file() {
        read_summary(&path)
    } else {
        Ok(analyze_campaign(&read_datasets(dir)?)?.1)
    }
}

pub fn shift_scan(dir: &Path, as_json: bool) -> Result<String> {
    let summary = summary_or_analysis(dir)?;
    let cfg = &summary.config;
    let theory = spring_slope(&cfg.cavity(), &cfg.mechanical_mode()?);
    let scan: ShiftScan = summary.scan.clone().ok_or_else(|| {
        Error::DegenerateSpan("campaign has a single probe detuning; nothing to scan".into())
    })?;
    if as_json {
        let mut v = to_value(&scan)?;
        v["theory_slope"] = json!(theory);
        return Ok(pretty(&v));
    }
    let mut s = String::new();
    s.push_str(&format!("# slope = {:.6} +- {:.6}\n", scan.slope, scan.slope_std));
    s.push_str(&format!("# offset_hz = {:.6} +- {:.6}\n", scan.offset, scan.offset_std));
    s.push_str(&format!("# theory_slope = {theory:.6}\n"));
    s.push_str("# columns: f_m_hz f_m_std_hz width_hz width_std_hz\n");
    for p in &scan.points {
        s.push_str(&format!("{:.6} {:.6} {:.6} {:.6}\n", p.f_m, p.f_m_std, p.width, p.width_std));
    }
    Ok(s.trim_end().to_string())
}

pub fn bound(summary_path: &Path, convention: &str, quadratures: &[&str]) -> Result<String> {
    let convention: AmplitudeConvention = convention.parse()?;
    let summary = read_summary(summary_path)?;
    let cfg = &summary.config;
    let mode = cfg.mechanical_mode()?;
    let state = cfg.cooled_state()?;
    // the weakest excitation of the campaign gives the conservative limit
    let alpha_sq = cfg.series_alpha_sq().into_iter().fold(f64::INFINITY, f64::min);
    let mut out = json!({
        "convention": convention.name(),
        "convention_description": convention.description(),
        "alpha_sq": alpha_sq,
        "n_bar": state.n_bar,
    });
    for q in quadratures {
        let stats = summary.quadrature(q)?;
        let b = beta_bound(stats, &state, &mode, &cfg.constants, alpha_sq, convention)?;
        out[*q] = to_value(&b)?;
    }
    Ok(pretty(&out))
}

fn two_column(path: &Path, header: &[String], rows: impl Iterator<Item = (f64, f64)>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for h in header {
        writeln!(w, "# {h}")?;
    }
    for (a, b) in rows {
        writeln!(w, "{a:.9e} {b:.9e}")?;
    }
    w.flush()?;
    Ok(())
}

fn written(files: &[PathBuf]) -> String {
    pretty(&json!({ "written": files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>() }))
}

pub fn plot_spectra(dir: &Path, out: &Path) -> Result<String> {
    let cfg = thermometry_config(dir, None)?;
    let options = ThermometryOptions::default();
    let acc = sideband_spectrum(dir, &cfg, &options)?;
    let spec = acc.spectrum()?;
    fs::create_dir_all(out)?;
    let data = out.join("spectrum.txt");
    let meta = gupsim_core::detection::Provenance {
        seed: Some(cfg.seed),
        config_hash: cfg.hash(),
    };
    let mut w = BufWriter::new(File::create(&data)?);
    write_spectrum(&mut w, &spec, &meta)?;
    w.flush()?;
    let mut files = vec![data];
    let det = cfg.detection_config();
    match thermometry_report(&spec, &det, &options, acc.n_records()) {
        Ok(r) => {
            let model = out.join("spectrum_fit.txt");
            let header = vec![
                format!("Lorentzian pair fit: n_bar = {:.4} +- {:.4}, ratio = {:.5}", r.n_bar, r.n_bar_std, r.ratio),
                "columns: frequency_hz model_psd_units2_per_hz".to_string(),
            ];
            two_column(&model, &header, spec.freqs.iter().map(|&f| (f, r.fit.model(f))))?;
            files.push(model);
        }
        Err(e) => log::warn!("no sideband fit for the plot: {e}"),
    }
    Ok(written(&files))
}

pub fn plot_histogram(dir: &Path, out: &Path) -> Result<String> {
    let summary = summary_or_analysis(dir)?;
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    for q in ["x", "y"] {
        let s = summary.quadrature(q)?;
        let path = out.join(format!("histogram_{q}.txt"));
        let header = vec![
            format!("initial shift, {} quadrature: mean = {:.3} Hz, std = {:.3} Hz, n = {}", q.to_uppercase(), s.mean, s.std, s.n_samples),
            "columns: bin_center_hz count".to_string(),
        ];
        let h = &s.histogram;
        two_column(&path, &header, h.centers().into_iter().zip(h.counts.iter().map(|&c| c as f64)))?;
        files.push(path);
    }
    Ok(written(&files))
}

pub fn plot_quadratures(dir: &Path, out: &Path) -> Result<String> {
    let datasets = read_datasets(dir)?;
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    for ds in &datasets {
        let avg = ds.average()?;
        for (name, ts) in [("x", &avg.x), ("y", &avg.y)] {
            let path = out.join(format!("quadrature_{name}_s{:02}.txt", ds.series_index));
            let header = vec![
                format!(
                    "series {} average of {} cycles, probe detuning {} Hz",
                    ds.series_index,
                    ds.records.len(),
                    ds.probe_detuning_hz
                ),
                format!("columns: time_s {}_units", name),
            ];
            two_column(&path, &header, ts.samples.iter().enumerate().map(|(k, &v)| (ts.time(k), v)))?;
            files.push(path);
        }
    }
    Ok(written(&files))
}
