//! Parameter estimation on demodulated records: ring-down fits, early-time
//! shift fits, ensemble statistics and deformation bounds.

mod bound;
mod ringdown;
mod scan;
mod shift;
mod stats;

pub use bound::{
    beta0_for_shift, beta_bound, predicted_shift, AmplitudeConvention, BetaBound,
};
pub use ringdown::{fit_ringdown, LineFrequencies, RingdownFit, RingdownOptions};
pub use scan::{width_vs_shift_scan, ScanPoint, ShiftScan};
pub use shift::{fit_transient_shift, Quadrature, ShiftFit};
pub use stats::{aggregate_shifts, aggregate_values, Binning, Histogram, ShiftStatistics};

/// Default early window after switch-off, s.
pub const EARLY_WINDOW: (f64, f64) = (0.0, 50e-6);
/// Default ring-down window after switch-off, s.
pub const BASE_WINDOW: (f64, f64) = (0.1e-3, 1.0e-3);
