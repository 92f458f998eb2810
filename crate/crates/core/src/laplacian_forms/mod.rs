//! Laplacians in a chart: Laplace–Beltrami on functions, the Hodge
//! Laplacian on p-forms, the perturbation Y = Δ_φ - Δ and discrete assembly.
//!
//! `laplacian_functions` returns div grad f (Σ∂²f on the flat metric). The
//! Hodge Laplacian used everywhere else is nonnegative and equals minus that
//! on functions; semigroups are exp(-tΔ_Hodge).

mod discrete;
mod jets;
mod perturbation;

pub use discrete::{assemble_discrete, CsrMatrix, DiscreteOperator, Triplet};
pub use jets::{hodge_coeffs, hodge_point, GridJets, PointCoeffs, PointJet};
pub use perturbation::{perturbation_apply, PerturbationBounds, PerturbationCoeffs, PerturbationOperator};

use crate::error::{Error, Result};
use crate::metric_charts::{form_components, inverse_and_det, ChartMetric, FormField, MetricOnGrid};
use nalgebra::DMatrix;
use rayon::prelude::*;

/// First-order coefficient of the divergence form: Σ_i ∂_i g^{ij} + g^{ij} ∂_i log√g.
fn divergence_drift(metric: &dyn ChartMetric, x: &[f64], ginv: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = metric.dim();
    let mut b = vec![0.0; n];
    for i in 0..n {
        let dgi = metric.dg(x, &[i])?;
        let dginv = -(ginv * &dgi * ginv);
        let dlog = 0.5 * (ginv * &dgi).trace();
        for (j, bj) in b.iter_mut().enumerate() {
            *bj += dginv[(i, j)] + ginv[(i, j)] * dlog;
        }
    }
    Ok(b)
}

/// (1/√g) ∂_i (g^{ij} √g ∂_j f) at x from the gradient and Hessian of f.
pub fn laplace_beltrami_point(metric: &dyn ChartMetric, x: &[f64], grad: &[f64], hess: &DMatrix<f64>) -> Result<f64> {
    let n = metric.dim();
    if grad.len() != n || hess.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, got: grad.len() });
    }
    let (ginv, _) = inverse_and_det(&metric.g(x), x)?;
    let b = divergence_drift(metric, x, &ginv)?;
    let mut v = 0.0;
    for i in 0..n {
        v += b[i] * grad[i];
        for j in 0..n {
            v += ginv[(i, j)] * hess[(i, j)];
        }
    }
    Ok(v)
}

/// Laplace–Beltrami operator on a grid function, derivatives by central differences.
pub fn laplacian_functions(metric: &dyn ChartMetric, f: &FormField) -> Result<FormField> {
    if f.p != 0 {
        return Err(Error::InvalidParameter("laplacian_functions takes a 0-form".into()));
    }
    let grid = &f.grid;
    let n = grid.dim;
    let jets = GridJets::new(f);
    let pr = jets::pairs(n);
    let vals = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let x = grid.point(k);
            let grad: Vec<f64> = (0..n).map(|a| jets.d[0][a][k]).collect();
            let mut hess = DMatrix::zeros(n, n);
            for (q, &(a, b)) in pr.iter().enumerate() {
                hess[(a, b)] = jets.dd[0][q][k];
                hess[(b, a)] = jets.dd[0][q][k];
            }
            laplace_beltrami_point(metric, &x, &grad, &hess)
        })
        .collect::<Result<Vec<_>>>()?;
    FormField::from_components(grid, 0, vec![vals])
}

/// Hodge Laplacian (nonnegative) of a p-form, p ≥ 1.
pub fn laplacian_forms(metric: &dyn ChartMetric, u: &FormField) -> Result<FormField> {
    if u.p == 0 {
        return Err(Error::InvalidParameter("p = 0: use laplacian_functions".into()));
    }
    let mg = MetricOnGrid::new(metric, &u.grid)?;
    laplacian_forms_on(&mg, u)
}

/// Hodge Laplacian with precomputed metric data; also accepts p = 0.
pub fn laplacian_forms_on(mg: &MetricOnGrid, u: &FormField) -> Result<FormField> {
    if u.grid != mg.grid {
        return Err(Error::InvalidParameter("form and metric live on different grids".into()));
    }
    let n = u.grid.dim;
    let p = u.p;
    let jets = GridJets::new(u);
    let sorted: Vec<usize> = form_components(n, p).iter().map(|j| j.iter().fold(0, |acc, &x| acc * n + x)).collect();
    let per: Vec<Vec<f64>> = (0..u.grid.len())
        .into_par_iter()
        .map(|k| {
            let out = hodge_point(n, p, &mg.ginv[k], &mg.gamma[k], &mg.dgamma[k], &jets.at(n, p, k));
            sorted.iter().map(|&o| out[o]).collect()
        })
        .collect();
    let comps = (0..sorted.len()).map(|c| per.iter().map(|v| v[c]).collect()).collect();
    FormField::from_components(&u.grid, p, comps)
}

/// Induced inner product on stored p-form components: minors det(g^{-1}[J, K]).
pub fn form_inner_block(ginv: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
    let combos = form_components(ginv.nrows(), p);
    let c = combos.len();
    DMatrix::from_fn(c, c, |a, b| {
        if p == 0 {
            return 1.0;
        }
        DMatrix::from_fn(p, p, |i, j| ginv[(combos[a][i], combos[b][j])]).determinant()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Boundary, Grid};
    use crate::metric_charts::{flat_torus, sphere_chart, Domain, ExprMetric};

    fn conformal() -> ExprMetric {
        let d = Domain { lo: vec![-3.0; 2], hi: vec![3.0; 2], periodic: false };
        ExprMetric::from_strs(d, &[&["exp(0.2*sin(x1)*cos(x2))", "0"], &["0", "exp(0.2*sin(x1)*cos(x2))"]]).unwrap()
    }

    #[test]
    fn flat_functions_are_plain_laplacian() {
        let m = flat_torus(2);
        let grid = m.domain().grid(16);
        let f = FormField::from_fn(&grid, 0, |_, x| x[0].sin() * (2.0 * x[1]).cos()).unwrap();
        let lf = laplacian_functions(&m, &f).unwrap();
        let jets = GridJets::new(&f);
        for k in 0..grid.len() {
            assert_eq!(lf.comps[0][k], jets.dd[0][0][k] + jets.dd[0][2][k]);
        }
    }

    #[test]
    fn square_gives_two() {
        let m = flat_torus(2);
        let grid = Grid::new(&[-1.0; 2], &[1.0; 2], 9, Boundary::ZeroExtension);
        let f = FormField::from_fn(&grid, 0, |_, x| x[0] * x[0]).unwrap();
        let lf = laplacian_functions(&m, &f).unwrap();
        for k in 0..grid.len() {
            let i = grid.multi_index(k);
            if i.iter().all(|&v| v > 0 && v < 8) {
                assert!((lf.comps[0][k] - 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conformal_pointwise_oracle() {
        // g = e^{2u}δ, n = 2: Δ_g f = e^{-2u} Δf.
        let m = conformal();
        for &(x, y) in &[(0.3, -0.7), (1.1, 0.4), (-2.0, 2.2)] {
            let grad = [2.0 * x * y, x * x + 3.0];
            let hess = DMatrix::from_row_slice(2, 2, &[2.0 * y, 2.0 * x, 2.0 * x, 0.0]);
            let lap = laplace_beltrami_point(&m, &[x, y], &grad, &hess).unwrap();
            let e2u = (0.2 * x.sin() * y.cos()).exp();
            assert!((lap - 2.0 * y / e2u).abs() < 1e-12, "{lap}");
        }
    }

    #[test]
    fn divergence_form_matches_christoffel_form() {
        let m = conformal();
        let x = [0.4, -1.2];
        let grad = [0.7, -0.2];
        let hess = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, -0.5]);
        let lb = laplace_beltrami_point(&m, &x, &grad, &hess).unwrap();
        let (ginv, _) = inverse_and_det(&m.g(&x), &x).unwrap();
        let gamma = crate::metric_charts::christoffel(&m, &x).unwrap();
        let mut jet = PointJet::zeros(2, 0);
        jet.d.copy_from_slice(&grad);
        jet.dd.copy_from_slice(hess.as_slice());
        let h = hodge_point(2, 0, &ginv, &gamma, &vec![0.0; 16], &jet);
        assert!((h[0] + lb).abs() < 1e-12);
    }

    fn point_data(m: &dyn ChartMetric, x: &[f64]) -> (DMatrix<f64>, Vec<f64>, Vec<f64>) {
        let n = m.dim();
        let (ginv, _) = inverse_and_det(&m.g(x), x).unwrap();
        let gamma = crate::metric_charts::christoffel(m, x).unwrap();
        let mut dgamma = Vec::new();
        for a in 0..n {
            dgamma.extend(crate::metric_charts::christoffel_derivative(m, x, &[a]).unwrap());
        }
        (ginv, gamma, dgamma)
    }

    #[test]
    fn sphere_dphi_is_harmonic() {
        // φ is harmonic on the round sphere, so Δ dφ = d Δφ = 0 while ∇dφ ≠ 0.
        let m = sphere_chart();
        for &th in &[1.2, 1.57, 1.9] {
            let (ginv, gamma, dgamma) = point_data(&m, &[th, 0.1]);
            let mut jet = PointJet::zeros(2, 1);
            jet.val[1] = 1.0;
            let out = hodge_point(2, 1, &ginv, &gamma, &dgamma, &jet);
            assert!(out[0].abs() < 1e-9 && out[1].abs() < 1e-9, "{out:?}");
        }
    }

    #[test]
    fn sphere_dtheta_oracle() {
        // Δ dθ = d Δθ with Δ_Hodge θ = -cotθ, so Δ dθ = csc²θ dθ.
        let m = sphere_chart();
        let th: f64 = 1.3;
        let (ginv, gamma, dgamma) = point_data(&m, &[th, 0.0]);
        let mut jet = PointJet::zeros(2, 1);
        jet.val[0] = 1.0;
        let out = hodge_point(2, 1, &ginv, &gamma, &dgamma, &jet);
        assert!((out[0] - 1.0 / (th.sin() * th.sin())).abs() < 1e-9, "{out:?}");
        assert!(out[1].abs() < 1e-9);
    }

    #[test]
    fn top_form_commutes_with_hodge_star() {
        // Δ(f vol) = (Δf) vol; on the sphere vol = sinθ dθ∧dφ.
        let m = sphere_chart();
        let th: f64 = 1.4;
        let (ginv, gamma, dgamma) = point_data(&m, &[th, 0.2]);
        // f = θ²: Δ_Hodge f = -(f'' + cotθ f') = -(2 + 2θ cotθ).
        let (s, c) = (th.sin(), th.cos());
        let a = th * th * s;
        let da = 2.0 * th * s + th * th * c;
        let dda = 2.0 * s + 4.0 * th * c - th * th * s;
        let mut jet = PointJet::zeros(2, 2);
        jet.val[1] = a;
        jet.val[2] = -a;
        jet.d[1] = da;
        jet.d[2] = -da;
        jet.dd[1] = dda;
        jet.dd[2] = -dda;
        let out = hodge_point(2, 2, &ginv, &gamma, &dgamma, &jet);
        let expect = -(2.0 + 2.0 * th * c / s) * s;
        assert!((out[1] - expect).abs() < 1e-9, "{} vs {expect}", out[1]);
    }

    #[test]
    fn flat_forms_are_minus_componentwise_functions() {
        let m = flat_torus(2);
        let grid = m.domain().grid(16);
        let u = FormField::from_fn(&grid, 1, |j, x| ((1 + j[0]) as f64 * x[0]).sin() * x[1].cos()).unwrap();
        let lu = laplacian_forms(&m, &u).unwrap();
        for c in 0..2 {
            let fc = FormField::from_components(&grid, 0, vec![u.comps[c].clone()]).unwrap();
            let lf = laplacian_functions(&m, &fc).unwrap();
            for k in 0..grid.len() {
                assert_eq!(lu.comps[c][k], -lf.comps[0][k]);
            }
        }
    }

    #[test]
    fn exact_form_of_harmonic_is_harmonic() {
        // h = e^{x1} cos x2 is harmonic; dh has a vanishing Laplacian up to O(h²).
        let m = flat_torus(2);
        let grid = Grid::new(&[-1.0; 2], &[1.0; 2], 41, Boundary::ZeroExtension);
        let u = FormField::from_fn(&grid, 1, |j, x| {
            if j[0] == 0 { x[0].exp() * x[1].cos() } else { -x[0].exp() * x[1].sin() }
        })
        .unwrap();
        let mg = MetricOnGrid::new(&m, &grid).unwrap();
        let lu = laplacian_forms_on(&mg, &u).unwrap();
        for k in 0..grid.len() {
            let i = grid.multi_index(k);
            if i.iter().all(|&v| v > 0 && v < 40) {
                assert!(lu.comps[0][k].abs() < 1e-3 && lu.comps[1][k].abs() < 1e-3);
            }
        }
    }

    #[test]
    fn inner_block_flat_identity_and_two_form() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let b = form_inner_block(&g, 2);
        assert!((b[(0, 0)] - g.determinant()).abs() < 1e-15);
        assert_eq!(form_inner_block(&DMatrix::identity(3, 3), 2), DMatrix::identity(3, 3));
    }
}
