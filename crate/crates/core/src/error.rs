use thiserror::Error;

/// Errors produced anywhere in the simulation and analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("integration step {dt:e} s exceeds the resolution limit {max:e} s")]
    StepTooLarge { dt: f64, max: f64 },
    #[error("state diverged to a non-finite value at t = {t:e} s")]
    NonFinite { t: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("negative phonon occupancy {0}")]
    NegativeOccupancy(f64),
    #[error("detuning {detuning:e} rad/s outside the linear regime (|detuning| <= {limit:e} rad/s)")]
    OutsideLinearRegime { detuning: f64, limit: f64 },
    #[error("effective damping {gamma_eff:e} rad/s is below the intrinsic damping {gamma_m:e} rad/s")]
    InvalidDamping { gamma_eff: f64, gamma_m: f64 },
    #[error("sideband ratio undefined for zero occupancy")]
    RatioUndefined,
    #[error("excitation ratio {0} dB exceeds the -30 dB limit")]
    ExcitationTooStrong(f64),
    #[error("sample rate {sample_rate} Hz below the required {required} Hz")]
    NyquistViolation { sample_rate: f64, required: f64 },
    #[error("duration too short: {0}")]
    DurationTooShort(String),
    #[error("filter configuration is unstable: {0}")]
    FilterUnstable(String),
    #[error("segment length {segment} exceeds series length {len}")]
    SegmentTooLong { segment: usize, len: usize },
    #[error("fit diverged: {0}")]
    FitDiverged(String),
    #[error("coherent peak not resolved (significance {0:.2} sigma)")]
    PeakNotResolved(f64),
    #[error("window ({start:e}, {end:e}) s outside record span ({t_min:e}, {t_max:e}) s")]
    WindowOutOfRange {
        start: f64,
        end: f64,
        t_min: f64,
        t_max: f64,
    },
    #[error("degenerate span: {0}")]
    DegenerateSpan(String),
    #[error("base fit invalid: {0}")]
    BaseFitInvalid(String),
    #[error("early window overlaps the base window")]
    WindowOverlap,
    #[error("too few samples: {got} (need at least {need})")]
    TooFewSamples { got: usize, need: usize },
    #[error("uncalibrated campaign: {0}")]
    UncalibratedCampaign(String),
    #[error("bound nonlinearity {0:e} exceeds the perturbative limit 0.1")]
    NonPerturbative(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid file format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable identifier, used by the CLI error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::StepTooLarge { .. } => "StepTooLarge",
            Error::NonFinite { .. } => "NonFinite",
            Error::InsufficientData(_) => "InsufficientData",
            Error::NegativeOccupancy(_) => "NegativeOccupancy",
            Error::OutsideLinearRegime { .. } => "OutsideLinearRegime",
            Error::InvalidDamping { .. } => "InvalidDamping",
            Error::RatioUndefined => "RatioUndefined",
            Error::ExcitationTooStrong(_) => "ExcitationTooStrong",
            Error::NyquistViolation { .. } => "NyquistViolation",
            Error::DurationTooShort(_) => "DurationTooShort",
            Error::FilterUnstable(_) => "FilterUnstable",
            Error::SegmentTooLong { .. } => "SegmentTooLong",
            Error::FitDiverged(_) => "FitDiverged",
            Error::PeakNotResolved(_) => "PeakNotResolved",
            Error::WindowOutOfRange { .. } => "WindowOutOfRange",
            Error::DegenerateSpan(_) => "DegenerateSpan",
            Error::BaseFitInvalid(_) => "BaseFitInvalid",
            Error::WindowOverlap => "WindowOverlap",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::UncalibratedCampaign(_) => "UncalibratedCampaign",
            Error::NonPerturbative(_) => "NonPerturbative",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Format(_) => "Format",
            Error::Io(_) => "Io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
