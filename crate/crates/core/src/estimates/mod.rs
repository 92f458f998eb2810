//! End-to-end checks of the smoothing estimates and decay fits.

mod checks;
mod contraction;
mod corpus;
mod fit;
mod report;

pub use checks::{
    classical_estimate_check, global_and_classical_suite, global_estimate_check, local_estimate_check,
    local_estimate_suite, EstimateConfig, MIN_BALL_STEPS,
};
pub use contraction::{l2_contraction_check, ContractionReport};
pub use corpus::{ball_cutoff, corpus, CorpusElement, CorpusShape, DEFAULT_SEED};
pub use fit::{exponent_fit, log_space, ExponentFit};
pub use report::{
    alpha, exponent, short_times, time_factor, CsvRow, EstimateKind, EstimateReport, EstimateRow, Regime, RegimeFit,
    REPORT_SCHEMA_VERSION, SIGN_CONVENTION, STABILITY_TOL,
};
