use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

mod commands;

#[derive(Parser, Debug)]
#[command(name = "gupsim", version, about = "Simulate and analyze pulsed ring-down campaigns of a cooled membrane oscillator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a campaign and write its dataset directory.
    Simulate {
        /// TOML campaign config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the number of series.
        #[arg(long)]
        series: Option<usize>,
        /// Only write the records, skip the fits and summary.
        #[arg(long)]
        no_analysis: bool,
    },
    /// Fit every group of a dataset and write the summary and fit reports.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Sideband thermometry of stationary records.
    Thermometry {
        /// Dataset directory or a single `.tsr` record.
        #[arg(long = "in")]
        input: PathBuf,
        /// Config for a bare record (otherwise the dataset snapshot or defaults).
        #[arg(long)]
        config: Option<PathBuf>,
        /// PSD bin spacing, Hz.
        #[arg(long, default_value_t = 200.0)]
        resolution: f64,
    },
    /// Width against frequency shift across series, with the fitted line.
    ShiftScan {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Upper limit on the deformation parameter from a campaign summary.
    Bound {
        #[arg(long)]
        summary: PathBuf,
        /// Displacement convention: msd or coherent.
        #[arg(long, default_value = "msd")]
        convention: String,
        #[arg(long, value_enum, default_value_t = Quadrature::Both)]
        quadrature: Quadrature,
    },
    /// Two-column text files for plotting.
    EmitPlotData {
        #[arg(long, value_enum)]
        what: PlotKind,
        #[arg(long = "in")]
        input: PathBuf,
        /// Output directory (default `<in>/plots`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Text,
    Json,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Quadrature {
    X,
    Y,
    Both,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum PlotKind {
    Spectra,
    Histogram,
    Quadratures,
}

fn error_record(kind: &str, message: &str) -> String {
    json!({ "error": { "kind": kind, "message": message } }).to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error_record("Usage", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Simulate {
            config,
            seed,
            out,
            series,
            no_analysis,
        } => commands::simulate(config.as_deref(), seed, &out, series, !no_analysis),
        Command::Analyze { input } => commands::analyze(&input),
        Command::Thermometry {
            input,
            config,
            resolution,
        } => commands::thermometry(&input, config.as_deref(), resolution),
        Command::ShiftScan { input, format } => commands::shift_scan(&input, format == Format::Json),
        Command::Bound {
            summary,
            convention,
            quadrature,
        } => {
            let q: &[&str] = match quadrature {
                Quadrature::X => &["x"],
                Quadrature::Y => &["y"],
                Quadrature::Both => &["x", "y"],
            };
            commands::bound(&summary, &convention, q)
        }
        Command::EmitPlotData { what, input, out } => {
            let out = out.unwrap_or_else(|| input.join("plots"));
            match what {
                PlotKind::Spectra => commands::plot_spectra(&input, &out),
                PlotKind::Histogram => commands::plot_histogram(&input, &out),
                PlotKind::Quadratures => commands::plot_quadratures(&input, &out),
            }
        }
    };
    match result {
        Ok(text) => {
            // a closed pipe (e.g. `| head`) is not a failure
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_record(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}
