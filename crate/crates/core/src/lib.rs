//! Simulation and analysis engine for a quantum-cooled mechanical oscillator
//! whose position–momentum bracket is deformed by a minimal-length term.
//!
//! The crate is organised along the measurement chain:
//!
//! * [`dynamics`]: deformed-bracket phase-space dynamics and the
//!   amplitude-dependent frequency law.
//! * [`optomech`]: optical cooling, optical spring/damping, re-thermalization
//!   and sideband weights.
//! * [`detection`]: heterodyne output synthesis, lock-in demodulation, Welch
//!   spectra, Lorentzian and coherent-peak analysis.
//! * [`estimation`]: ring-down and transient-shift fits, ensemble statistics
//!   and deformation bounds.
//! * [`protocol`]: experimental cycle orchestration, campaigns, configuration
//!   and persistence.

pub mod detection;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod lsq;
pub mod optomech;
pub mod protocol;
pub mod rng;

pub use detection::{
    DetectionConfig, LorentzianPairFit, QuadratureRecord, SpectrumEstimate, TimeSeries,
};
pub use dynamics::{
    DeformationParams, MechanicalMode, PhaseState, PhysicalConstants, Trajectory,
};
pub use error::{Error, Result};
pub use estimation::{RingdownFit, ShiftFit, ShiftStatistics};
pub use optomech::{CooledState, OpticalCavity};
pub use protocol::{CampaignConfig, Dataset, ProtocolSchedule, Scenario};
