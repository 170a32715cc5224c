//! Experimental cycle orchestration: configuration, cycle synthesis,
//! campaigns, analysis and dataset persistence.

mod analysis;
mod campaign;
mod config;
mod cycle;
pub mod store;
mod thermometry;

pub use analysis::{
    analyze_campaign, analyze_dataset, summarize, CampaignSummary, GroupFailure, GroupResult,
    SeriesAnalysis, SeriesSummary,
};
pub use campaign::{
    run_campaign, run_series, run_stationary, stationary_segment, Dataset, DatasetProvenance, TOOL_VERSION,
};
pub use config::{
    AnalysisSection, CampaignConfig, CampaignSection, CavitySection, DeformationCoupling,
    DeformationSection, DetectionSection, ModeSection, OperatingSection, ProtocolSchedule,
    Scenario, SpuriousMode,
};
pub use cycle::{cycle_seed, run_cycle, CycleOutput, SeriesPlan};
pub use thermometry::{
    thermometry, thermometry_report, SidebandSpectrum, ThermometryOptions, ThermometryReport,
};
