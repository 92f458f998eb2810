use super::jets::{hodge_coeffs, pairs, GridJets, PointCoeffs};
use crate::error::{Error, Result};
use crate::metric_charts::{is_admissible, AdmissibleBall, ChartMetric, FormField, MetricOnGrid};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Pointwise coefficients of Y = Δ_φ - Δ in the div-grad sign (a_ij = g^{ij} - δ^{ij}
/// on each component), with mixed partials merged over a ≤ b.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationCoeffs {
    pub p: usize,
    pub n: usize,
    /// 1 for functions, 2 for forms.
    pub alpha: u32,
    pub points: Vec<PointCoeffs>,
}

impl PerturbationCoeffs {
    /// Σ_{ij} |a_ij| at point k (max over component pairs).
    pub fn a_sum(&self, k: usize) -> f64 {
        let pc = &self.points[k];
        let np = pairs(self.n).len();
        (0..np).map(|q| (0..pc.comps * pc.comps).map(|kl| pc.second[kl * np + q].abs()).fold(0.0, f64::max)).sum()
    }

    /// Σ_i |b_i| at point k, each b_i measured by its max row sum over components.
    pub fn b_sum(&self, k: usize) -> f64 {
        let pc = &self.points[k];
        let (c, n) = (pc.comps, self.n);
        (0..n)
            .map(|a| (0..c).map(|kk| (0..c).map(|l| pc.first[(kk * c + l) * n + a].abs()).sum::<f64>()).fold(0.0, f64::max))
            .sum()
    }

    /// Max row sum of the zeroth-order (curvature) block at point k.
    pub fn c_sum(&self, k: usize) -> f64 {
        let pc = &self.points[k];
        let c = pc.comps;
        (0..c).map(|kk| (0..c).map(|l| pc.zeroth[kk * c + l].abs()).sum::<f64>()).fold(0.0, f64::max)
    }
}

/// Reusable Y on a fixed grid.
#[derive(Debug, Clone)]
pub struct PerturbationOperator {
    pub coeffs: PerturbationCoeffs,
    pub flat: bool,
}

impl PerturbationOperator {
    pub fn new(mg: &MetricOnGrid, p: usize) -> Result<Self> {
        let n = mg.dim();
        if p > n {
            return Err(Error::DegreeTooLarge { p, n });
        }
        let pr = pairs(n);
        let points = (0..mg.grid.len())
            .into_par_iter()
            .map(|k| {
                let mut pc = hodge_coeffs(n, p, &mg.ginv[k], &mg.gamma[k], &mg.dgamma[k]);
                for v in pc.second.iter_mut().chain(pc.first.iter_mut()).chain(pc.zeroth.iter_mut()) {
                    *v = -*v;
                }
                for c in 0..pc.comps {
                    for (q, &(a, b)) in pr.iter().enumerate() {
                        if a == b {
                            pc.second[(c * pc.comps + c) * pr.len() + q] -= 1.0;
                        }
                    }
                }
                pc
            })
            .collect();
        let alpha = if p == 0 { 1 } else { 2 };
        Ok(PerturbationOperator { coeffs: PerturbationCoeffs { p, n, alpha, points }, flat: mg.flat })
    }

    /// Y v with central-difference jets.
    pub fn apply(&self, v: &FormField) -> FormField {
        let mut out = FormField::zeros(&v.grid, v.p).expect("degree checked at construction");
        if self.flat {
            return out;
        }
        let jets = GridJets::new(v);
        let n = self.coeffs.n;
        let np = pairs(n).len();
        let per: Vec<Vec<f64>> = (0..v.grid.len())
            .into_par_iter()
            .map(|k| {
                let pc = &self.coeffs.points[k];
                let c = pc.comps;
                (0..c)
                    .map(|kk| {
                        let mut s = 0.0;
                        for l in 0..c {
                            let base = kk * c + l;
                            s += pc.zeroth[base] * jets.val[l][k];
                            for a in 0..n {
                                s += pc.first[base * n + a] * jets.d[l][a][k];
                            }
                            for q in 0..np {
                                s += pc.second[base * np + q] * jets.dd[l][q][k];
                            }
                        }
                        s
                    })
                    .collect()
            })
            .collect();
        for (c, comp) in out.comps.iter_mut().enumerate() {
            for (k, x) in comp.iter_mut().enumerate() {
                *x = per[k][c];
            }
        }
        out
    }
}

/// Coefficient bounds of Y over the grid points of a chart ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationBounds {
    pub eps: f64,
    pub radius: f64,
    pub alpha: u32,
    pub a_sum: f64,
    pub b_sum: f64,
    pub c_sum: f64,
    pub a_within_eps: bool,
    /// b_sum / (ε R^{-α}).
    pub b_constant: f64,
    /// c_sum / (ε R^{-α}).
    pub c_constant: f64,
    /// Smallest C with |Yv| ≤ ε|∂²v| + C ε R^{-α} (|∂v| + |v|) at every ball point.
    pub pointwise_c: f64,
}

/// Apply Y to v on its grid and report the coefficient bounds over `ball`.
pub fn perturbation_apply(
    metric: &dyn ChartMetric,
    ball: &AdmissibleBall,
    v: &FormField,
) -> Result<(FormField, PerturbationCoeffs, PerturbationBounds)> {
    let required = if v.p == 0 { 1 } else { 2 };
    if ball.m < required {
        return Err(Error::AdmissibilityOrder { given: ball.m, required });
    }
    let rep = is_admissible(metric, &ball.center, ball.radius, required, ball.eps)?;
    if !rep.admissible {
        return Err(Error::InvalidParameter(format!(
            "ball at {:?} with radius {} is not ({required}, {})-admissible",
            ball.center, ball.radius, ball.eps
        )));
    }
    let mg = MetricOnGrid::new(metric, &v.grid)?;
    let op = PerturbationOperator::new(&mg, v.p)?;
    let yv = op.apply(v);
    let grid = &v.grid;
    let n = grid.dim;
    let jets = GridJets::new(v);
    let np = pairs(n);
    let (eps, radius) = (ball.eps, ball.radius);
    let scale = eps * radius.powi(-(op.coeffs.alpha as i32));
    let mut b = PerturbationBounds {
        eps,
        radius,
        alpha: op.coeffs.alpha,
        a_sum: 0.0,
        b_sum: 0.0,
        c_sum: 0.0,
        a_within_eps: true,
        b_constant: 0.0,
        c_constant: 0.0,
        pointwise_c: 0.0,
    };
    for k in 0..grid.len() {
        let d2: f64 = grid.displacement(&grid.point(k), &ball.center).iter().map(|d| d * d).sum();
        if d2 >= radius * radius {
            continue;
        }
        b.a_sum = b.a_sum.max(op.coeffs.a_sum(k));
        b.b_sum = b.b_sum.max(op.coeffs.b_sum(k));
        b.c_sum = b.c_sum.max(op.coeffs.c_sum(k));
        let y: f64 = yv.comps.iter().map(|c| c[k] * c[k]).sum::<f64>().sqrt();
        let mut h2 = 0.0;
        for l in 0..jets.val.len() {
            for (q, &(a, bb)) in np.iter().enumerate() {
                let w = if a == bb { 1.0 } else { 2.0 };
                h2 += w * jets.dd[l][q][k].powi(2);
            }
        }
        let g1: f64 = jets.d.iter().flat_map(|c| c.iter().map(|d| d[k] * d[k])).sum::<f64>().sqrt();
        let g0: f64 = jets.val.iter().map(|c| c[k] * c[k]).sum::<f64>().sqrt();
        let excess = y - eps * h2.sqrt();
        if excess > 1e-14 {
            let denom = scale * (g1 + g0);
            b.pointwise_c = b.pointwise_c.max(if denom > 0.0 { excess / denom } else { f64::INFINITY });
        }
    }
    b.a_within_eps = b.a_sum <= eps;
    b.b_constant = b.b_sum / scale;
    b.c_constant = b.c_sum / scale;
    Ok((yv, op.coeffs, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric_charts::{flat_torus, perturbed_euclidean, Domain, ExprMetric};

    #[test]
    fn flat_perturbation_vanishes() {
        let m = flat_torus(2);
        let grid = m.domain().grid(12);
        let mg = MetricOnGrid::new(&m, &grid).unwrap();
        for p in 0..=2 {
            let op = PerturbationOperator::new(&mg, p).unwrap();
            for k in 0..grid.len() {
                assert_eq!(op.coeffs.a_sum(k), 0.0);
                assert_eq!(op.coeffs.b_sum(k), 0.0);
                assert_eq!(op.coeffs.c_sum(k), 0.0);
            }
        }
    }

    #[test]
    fn linear_conformal_series_oracle() {
        let eta = 1e-3;
        let d = Domain { lo: vec![-1.0; 2], hi: vec![1.0; 2], periodic: false };
        let s = format!("1 + {eta:e}*x1");
        let m = ExprMetric::from_strs(d, &[&[&s, "0"], &["0", &s]]).unwrap();
        let grid = crate::grid::Grid::new(&[-1.0; 2], &[1.0; 2], 9, crate::grid::Boundary::ZeroExtension);
        let mg = MetricOnGrid::new(&m, &grid).unwrap();
        let op = PerturbationOperator::new(&mg, 0).unwrap();
        for k in 0..grid.len() {
            let x1 = grid.point(k)[0];
            let pc = &op.coeffs.points[k];
            // pairs (0,0), (0,1), (1,1)
            assert!((pc.second[0] + eta * x1).abs() < 2.0 * eta * eta);
            assert!((pc.second[2] + eta * x1).abs() < 2.0 * eta * eta);
            assert!(pc.second[1].abs() < 1e-15);
            if x1.abs() < 1e-14 {
                assert!(pc.second[0].abs() < 1e-15);
            }
        }
    }

    #[test]
    fn function_drift_matches_divergence_form() {
        let m = perturbed_euclidean(0.03, 1.0);
        let grid = m.domain().grid(8);
        let mg = MetricOnGrid::new(&m, &grid).unwrap();
        let op = PerturbationOperator::new(&mg, 0).unwrap();
        for k in [0, 13, 40] {
            let x = grid.point(k);
            let grad = [0.3, -1.1];
            let hess = nalgebra::DMatrix::zeros(2, 2);
            let lb = super::super::laplace_beltrami_point(&m, &x, &grad, &hess).unwrap();
            let pc = &op.coeffs.points[k];
            let yv = pc.first[0] * grad[0] + pc.first[1] * grad[1];
            assert!((yv - lb).abs() < 1e-12);
        }
    }

    #[test]
    fn perturbed_bounds_on_ball() {
        let m = perturbed_euclidean(0.03, 1.0);
        let grid = m.domain().grid(24);
        let v = FormField::from_fn(&grid, 0, |_, x| x[0].sin() + (x[1] - 0.5).cos()).unwrap();
        let ball = AdmissibleBall { center: vec![0.0, 0.0], radius: 0.3, m: 1, eps: 0.05 };
        let (_, _, b) = perturbation_apply(&m, &ball, &v).unwrap();
        assert!(b.a_within_eps, "{b:?}");
        assert!(b.pointwise_c.is_finite() && b.b_constant.is_finite());
        let bad = AdmissibleBall { m: 1, ..ball };
        let w = FormField::zeros(&grid, 1).unwrap();
        assert!(matches!(perturbation_apply(&m, &bad, &w), Err(Error::AdmissibilityOrder { required: 2, .. })));
    }
}
