//! Shared fixtures for the criterion benches.

use heatforms_core::metric_charts::{perturbed_euclidean, ExprMetric};
use heatforms_core::{ChartMetric, FormField, Grid};

/// The perturbed metric used across benches.
pub fn metric() -> ExprMetric {
    perturbed_euclidean(0.03, 1.0)
}

pub fn grid(size: usize) -> Grid {
    metric().domain().grid(size)
}

/// A smooth p-form with every component nonzero.
pub fn bump(grid: &Grid, p: usize) -> FormField {
    FormField::from_fn(grid, p, |j, x| {
        let s: usize = j.iter().sum();
        (-(x[0] * x[0] + x[1] * x[1])).exp() * (1.0 + 0.3 * s as f64)
    })
    .expect("degree fits the grid")
}
