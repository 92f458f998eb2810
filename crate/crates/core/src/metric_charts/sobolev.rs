use super::forms::{covariant_derivative, tensor_modulus, FormField, MetricOnGrid, TensorField};
use super::{is_admissible, AdmissibleBall, ChartMetric};
use crate::error::{Error, Result};
use crate::grid::{lr_norm, partial};
use serde::{Deserialize, Serialize};

/// Outcome of comparing ‖∇^k u‖ on a chart ball with Euclidean norms of
/// the coefficient vector v.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolevReport {
    pub k: usize,
    pub r: f64,
    pub radius: f64,
    pub eps: f64,
    /// ‖∇^k u‖_{L^r(B)} with the Riemannian volume.
    pub covariant_norm: f64,
    /// ‖∂^k v‖_{L^r(B_e((1+ε)R))}.
    pub leading_norm: f64,
    /// ε R^{-k} Σ_j ‖∂^j v‖ over the lower orders that enter the bound.
    pub lower_sum: f64,
    /// Smallest C making the forward inequality hold (0 if the leading term suffices).
    pub forward_c: f64,
    /// ‖v‖_{W^{k,r}(B_e((1-ε)R))}.
    pub reverse_lhs: f64,
    /// ‖u‖_{W^{k,r}(B)}.
    pub reverse_rhs: f64,
    /// Smallest c with reverse_lhs ≤ c R^{-k} reverse_rhs (R^{1-k} for functions).
    pub reverse_c: f64,
    /// max over ball points of (|∇^k u| - |∂^k v|) / (ε R^{-k} Σ_j |∂^j v|).
    pub pointwise_c: f64,
}

/// Required admissibility order for a k-th order comparison on p-forms.
pub fn required_order(p: usize, k: usize) -> usize {
    if p == 0 {
        k.saturating_sub(1).max(1)
    } else {
        k.max(2)
    }
}

fn euclid_derivative(u: &FormField, j: usize) -> TensorField {
    let n = u.grid.dim;
    let mut t = u.to_tensor();
    for _ in 0..j {
        let mut data = Vec::with_capacity(n * t.data.len());
        for a in 0..n {
            for c in &t.data {
                data.push(partial(&u.grid, c, a));
            }
        }
        t = TensorField { rank: t.rank + 1, grid: u.grid.clone(), data };
    }
    t
}

fn euclid_modulus(t: &TensorField, p: usize) -> Vec<f64> {
    let scale: f64 = (1..=p).map(|v| v as f64).product::<f64>().sqrt();
    let m = t.grid.len();
    (0..m).map(|k| t.data.iter().map(|c| c[k] * c[k]).sum::<f64>().sqrt() / scale).collect()
}

fn masked(values: &[f64], mask: &[bool]) -> Vec<f64> {
    values.iter().zip(mask).map(|(v, &m)| if m { *v } else { 0.0 }).collect()
}

pub fn sobolev_compare(metric: &dyn ChartMetric, u: &FormField, ball: &AdmissibleBall, k: usize, r: f64) -> Result<SobolevReport> {
    let p = u.p;
    let beta = required_order(p, k);
    if ball.m < beta {
        return Err(Error::AdmissibilityOrder { given: ball.m, required: beta });
    }
    let rep = is_admissible(metric, &ball.center, ball.radius, beta, ball.eps)?;
    if !rep.admissible {
        return Err(Error::InvalidParameter(format!(
            "ball at {:?} with radius {} is not ({beta}, {})-admissible",
            ball.center, ball.radius, ball.eps
        )));
    }
    let mg = MetricOnGrid::new(metric, &u.grid)?;
    let grid = &u.grid;
    let dist: Vec<f64> = (0..grid.len())
        .map(|i| grid.displacement(&grid.point(i), &ball.center).iter().map(|d| d * d).sum::<f64>().sqrt())
        .collect();
    let (eps, radius) = (ball.eps, ball.radius);
    let inner: Vec<bool> = dist.iter().map(|&d| d < radius).collect();
    let outer: Vec<bool> = dist.iter().map(|&d| d < (1.0 + eps) * radius).collect();
    let shrunk: Vec<bool> = dist.iter().map(|&d| d < (1.0 - eps) * radius).collect();
    let flat_dv = vec![grid.cell_volume(); grid.len()];

    let cov: Vec<Vec<f64>> = (0..=k)
        .map(|j| covariant_derivative(&mg, u, j).map(|t| tensor_modulus(&mg, &t, p)))
        .collect::<Result<_>>()?;
    let euc: Vec<Vec<f64>> = (0..=k).map(|j| euclid_modulus(&euclid_derivative(u, j), p)).collect();

    let covariant_norm = lr_norm(&masked(&cov[k], &inner), r, &mg.volume);
    let leading_norm = lr_norm(&masked(&euc[k], &outer), r, &flat_dv);
    let first = if p == 0 { 1 } else { 0 };
    let weight = eps * radius.powi(-(k as i32));
    let lower_sum = weight * (first..k).map(|j| lr_norm(&masked(&euc[j], &outer), r, &flat_dv)).sum::<f64>();
    let forward_c = required_constant(covariant_norm - leading_norm, lower_sum);

    let reverse_lhs: f64 = (0..=k).map(|j| lr_norm(&masked(&euc[j], &shrunk), r, &flat_dv)).sum();
    let reverse_rhs: f64 = (0..=k).map(|j| lr_norm(&masked(&cov[j], &inner), r, &mg.volume)).sum();
    let rpow = if p == 0 { 1 - k as i32 } else { -(k as i32) };
    let reverse_c = required_constant(reverse_lhs, radius.powi(rpow) * reverse_rhs);

    let mut pointwise_c: f64 = 0.0;
    for i in (0..grid.len()).filter(|&i| inner[i]) {
        let lower: f64 = weight * (first..k).map(|j| euc[j][i]).sum::<f64>();
        pointwise_c = pointwise_c.max(required_constant(cov[k][i] - euc[k][i], lower));
    }

    Ok(SobolevReport {
        k,
        r,
        radius,
        eps,
        covariant_norm,
        leading_norm,
        lower_sum,
        forward_c,
        reverse_lhs,
        reverse_rhs,
        reverse_c,
        pointwise_c,
    })
}

/// Smallest C ≥ 0 with excess ≤ C·scale; infinite when scale vanishes but excess does not.
fn required_constant(excess: f64, scale: f64) -> f64 {
    if excess <= 1e-12 * (1.0 + scale.abs()) {
        0.0
    } else if scale > 0.0 {
        excess / scale
    } else {
        f64::INFINITY
    }
}
