use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Least-squares line through (log t, log v).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
}

/// Fit `v ≈ exp(intercept) * t^slope`. Needs at least 6 positive samples
/// spanning one decade in t.
pub fn exponent_fit(times: &[f64], values: &[f64]) -> Result<ExponentFit> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), got: values.len() });
    }
    if times.len() < 6 {
        return Err(Error::InvalidParameter(format!("need >= 6 points, got {}", times.len())));
    }
    if times.iter().chain(values).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter("times and values must be positive and finite".into()));
    }
    let lo = times.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = times.iter().cloned().fold(0.0, f64::max);
    if hi / lo < 10.0 * (1.0 - 1e-12) {
        return Err(Error::InvalidParameter(format!("time span {lo}..{hi} is under one decade")));
    }
    let x: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|xi| (xi - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = x.iter().zip(&y).map(|(xi, yi)| (yi - intercept - slope * xi).powi(2)).sum();
    Ok(ExponentFit { slope, intercept, residual: (ss / m).sqrt() })
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    (0..count)
        .map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::euclid_heat::kernel_lr_norm;

    #[test]
    fn exact_power() {
        let t = log_space(1.0, 20.0, 12);
        let v: Vec<f64> = t.iter().map(|t| t.powf(-0.5)).collect();
        let f = exponent_fit(&t, &v).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12 && f.residual < 1e-12);
    }

    #[test]
    fn constant_has_zero_slope() {
        let t = log_space(0.1, 10.0, 8);
        let f = exponent_fit(&t, &vec![3.0; 8]).unwrap();
        assert!(f.slope.abs() < 1e-12);
    }

    #[test]
    fn kernel_derivative_l1_norm_slope() {
        // ‖∂_xΦ‖_{L^1} = (πt)^{-1/2}, so its slope is -(1/2 + 0).
        let t = log_space(0.05, 20.0, 10);
        let v: Vec<f64> = t.iter().map(|&t| kernel_lr_norm(1, &[1], 1.0, t).unwrap()).collect();
        let f = exponent_fit(&t, &v).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-6);
        // Sup norm carries the extra n/2.
        let v: Vec<f64> = t.iter().map(|&t| kernel_lr_norm(1, &[1], f64::INFINITY, t).unwrap()).collect();
        assert!((exponent_fit(&t, &v).unwrap().slope + 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_input() {
        let t = log_space(1.0, 20.0, 6);
        assert!(exponent_fit(&t[..5], &[1.0; 5]).is_err());
        assert!(exponent_fit(&t, &[1.0, 1.0, 0.0, 1.0, 1.0, 1.0]).is_err());
        assert!(exponent_fit(&log_space(1.0, 5.0, 6), &[1.0; 6]).is_err());
    }
}
