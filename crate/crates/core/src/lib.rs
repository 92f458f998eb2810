//! Heat semigroup smoothing estimates on differential forms over charts.
//!
//! Sign convention: every Laplacian stored here is nonnegative (Δ = dd* + d*d,
//! so Δ = -Σ∂² on flat functions) and the semigroup is e^{-tΔ}. The Euclidean
//! kernel module keeps the analyst's e^{tΔ} with Δ = Σ∂²; the two agree.

pub mod covering;
pub mod duhamel;
pub mod error;
pub mod estimates;
pub mod euclid_heat;
pub mod grid;
pub mod laplacian_forms;
pub mod metric_charts;
pub mod quadrature;
pub mod scenario;

pub use error::{Error, Result};
pub use estimates::{EstimateConfig, EstimateKind, EstimateReport, Regime};
pub use grid::{Boundary, Grid};
pub use metric_charts::{ChartMetric, FormField};
pub use scenario::{Scenario, ARTIFACT_VERSION};
