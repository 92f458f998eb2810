//! Chart-level Riemannian data: metrics with derivative access, admissible
//! balls and radii, Christoffel symbols, covariant derivatives of forms,
//! Ricci curvature and the Sobolev comparison.

mod admissible;
mod christoffel;
pub mod expr;
mod forms;
mod geodesic;
mod sobolev;

pub use admissible::{
    admissible_radius, ball_template, check_lipschitz, check_slow_variation, derivative_multi_indices,
    is_admissible, radius_field, AdmissibilityReport, AdmissibleBall, RadiusField, RadiusOpts,
    RadiusSample, VariationReport, BISECTION_TOL, R_CAP,
};
pub use christoffel::{
    christoffel, christoffel_bound_check, christoffel_derivative, ricci, ChristoffelBoundReport, RicciReport,
};
pub use forms::{
    covariant_derivative, form_components, sorted_component, tensor_modulus, FormField, MetricOnGrid,
    TensorField,
};
pub(crate) use forms::unflatten;
pub use geodesic::GraphDistance;
pub use sobolev::{required_order, sobolev_compare, SobolevReport};

use crate::error::{Error, Result};
use crate::euclid_heat::TrigInterpolant;
use crate::grid::{Boundary, Grid};
use expr::Expr;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;

/// Highest derivative order precomputed for expression metrics.
pub const MAX_EXPR_ORDER: usize = 4;

/// Coordinate box of a chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub periodic: bool,
}

impl Domain {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn grid(&self, size: usize) -> Grid {
        let b = if self.periodic { Boundary::Periodic } else { Boundary::ZeroExtension };
        Grid::new(&self.lo, &self.hi, size, b)
    }

    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        if self.periodic {
            return f64::INFINITY;
        }
        (0..self.dim()).map(|a| (x[a] - self.lo[a]).min(self.hi[a] - x[a])).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.periodic || (0..self.dim()).all(|a| x[a] >= self.lo[a] - 1e-12 && x[a] <= self.hi[a] + 1e-12)
    }
}

/// A metric tensor g_ij on a coordinate chart with derivative access.
pub trait ChartMetric: Send + Sync {
    fn dim(&self) -> usize;
    fn domain(&self) -> &Domain;
    /// Highest derivative order available through [`ChartMetric::dg`].
    fn max_order(&self) -> usize;
    fn g(&self, x: &[f64]) -> DMatrix<f64>;
    /// ∂_{d1}…∂_{dk} g_ij at x; `dirs` lists the differentiation axes.
    fn dg(&self, x: &[f64], dirs: &[usize]) -> Result<DMatrix<f64>>;
    /// True when g ≡ δ, which lets callers skip curvature work exactly.
    fn is_flat(&self) -> bool {
        false
    }
}

/// Inverse and determinant of a symmetric positive-definite matrix.
pub fn inverse_and_det(g: &DMatrix<f64>, at: &[f64]) -> Result<(DMatrix<f64>, f64)> {
    let chol = g.clone().cholesky().ok_or_else(|| Error::SingularMetric(at.to_vec()))?;
    let det = chol.determinant();
    if !(det > 0.0) || !det.is_finite() {
        return Err(Error::SingularMetric(at.to_vec()));
    }
    Ok((chol.inverse(), det))
}

fn sorted_key(dirs: &[usize]) -> Vec<usize> {
    let mut k = dirs.to_vec();
    k.sort_unstable();
    k
}

/// Metric given by expression strings for each component.
#[derive(Debug, Clone)]
pub struct ExprMetric {
    domain: Domain,
    components: Vec<Vec<Expr>>,
    derivatives: HashMap<Vec<usize>, Vec<Vec<Expr>>>,
    flat: bool,
}

impl ExprMetric {
    /// Build from an n×n table of expression strings; only the upper
    /// triangle is read and mirrored.
    pub fn new(domain: Domain, table: &[Vec<String>]) -> Result<Self> {
        let n = domain.dim();
        if n == 0 {
            return Err(Error::BadDimension(0));
        }
        if table.len() != n || table.iter().any(|row| row.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: table.len() });
        }
        let mut components = vec![vec![Expr::Const(0.0); n]; n];
        for i in 0..n {
            for j in i..n {
                let e = Expr::parse(&table[i][j], n)?;
                components[i][j] = e.clone();
                components[j][i] = e;
            }
        }
        let flat = (0..n).all(|i| {
            (0..n).all(|j| components[i][j] == Expr::Const(if i == j { 1.0 } else { 0.0 }))
        });
        let mut derivatives = HashMap::new();
        let mut frontier: Vec<(Vec<usize>, Vec<Vec<Expr>>)> = vec![(vec![], components.clone())];
        for _ in 0..MAX_EXPR_ORDER {
            let mut next = Vec::new();
            for (key, comps) in &frontier {
                let last = key.last().copied().unwrap_or(0);
                for d in last..n {
                    let mut k = key.clone();
                    k.push(d);
                    let dc: Vec<Vec<Expr>> =
                        comps.iter().map(|row| row.iter().map(|e| e.diff(d)).collect()).collect();
                    derivatives.insert(k.clone(), dc.clone());
                    next.push((k, dc));
                }
            }
            frontier = next;
        }
        Ok(ExprMetric { domain, components, derivatives, flat })
    }

    pub fn from_strs(domain: Domain, table: &[&[&str]]) -> Result<Self> {
        let owned: Vec<Vec<String>> = table.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect();
        Self::new(domain, &owned)
    }
}

fn eval_table(t: &[Vec<Expr>], x: &[f64]) -> DMatrix<f64> {
    let n = t.len();
    DMatrix::from_fn(n, n, |i, j| t[i][j].eval(x))
}

impl ChartMetric for ExprMetric {
    fn dim(&self) -> usize {
        self.domain.dim()
    }
    fn domain(&self) -> &Domain {
        &self.domain
    }
    fn max_order(&self) -> usize {
        MAX_EXPR_ORDER
    }
    fn g(&self, x: &[f64]) -> DMatrix<f64> {
        eval_table(&self.components, x)
    }
    fn dg(&self, x: &[f64], dirs: &[usize]) -> Result<DMatrix<f64>> {
        if dirs.is_empty() {
            return Ok(self.g(x));
        }
        match self.derivatives.get(&sorted_key(dirs)) {
            Some(t) => Ok(eval_table(t, x)),
            None => Err(Error::InsufficientOrder { requested: MAX_EXPR_ORDER, required: dirs.len() }),
        }
    }
    fn is_flat(&self) -> bool {
        self.flat
    }
}

/// Metric sampled on a grid. Periodic charts use the trigonometric
/// interpolant (derivatives exact for the interpolant); bounded charts use
/// multilinear interpolation with centred differences at the grid step.
pub struct GridMetric {
    domain: Domain,
    grid: Grid,
    values: Vec<Vec<Vec<f64>>>,
    interp: Option<Vec<Vec<TrigInterpolant>>>,
}

impl GridMetric {
    /// `values[i][j]` holds g_ij at the points of `domain.grid(size)`.
    pub fn new(domain: Domain, size: usize, values: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n = domain.dim();
        let grid = domain.grid(size);
        if values.len() != n || values.iter().any(|r| r.len() != n || r.iter().any(|c| c.len() != grid.len())) {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.first().and_then(|r| r.first()).map_or(0, |c| c.len()) });
        }
        let interp = if domain.periodic {
            let mut rows = Vec::with_capacity(n);
            for i in 0..n {
                let mut row = Vec::with_capacity(n);
                for j in 0..n {
                    row.push(TrigInterpolant::new(&values[i][j], &grid)?);
                }
                rows.push(row);
            }
            Some(rows)
        } else {
            None
        };
        Ok(GridMetric { domain, grid, values, interp })
    }

    fn multilinear(&self, i: usize, j: usize, x: &[f64]) -> f64 {
        let g = &self.grid;
        let n = g.dim;
        let mut base = vec![0usize; n];
        let mut frac = vec![0.0; n];
        for a in 0..n {
            let s = (x[a] - g.coord(a, 0)) / g.h[a];
            let s = s.clamp(0.0, (g.size - 1) as f64);
            let k = (s.floor() as usize).min(g.size - 2);
            base[a] = k;
            frac[a] = s - k as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut idx = base.clone();
            for a in 0..n {
                if corner >> a & 1 == 1 {
                    idx[a] += 1;
                    w *= frac[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            acc += w * self.values[i][j][g.flat_index(&idx)];
        }
        acc
    }

    fn fd(&self, i: usize, j: usize, x: &[f64], dirs: &[usize]) -> f64 {
        match dirs.split_first() {
            None => self.multilinear(i, j, x),
            Some((&d, rest)) => {
                let h = self.grid.h[d];
                let mut p = x.to_vec();
                let mut m = x.to_vec();
                p[d] += h;
                m[d] -= h;
                (self.fd(i, j, &p, rest) - self.fd(i, j, &m, rest)) / (2.0 * h)
            }
        }
    }
}

impl ChartMetric for GridMetric {
    fn dim(&self) -> usize {
        self.domain.dim()
    }
    fn domain(&self) -> &Domain {
        &self.domain
    }
    fn max_order(&self) -> usize {
        MAX_EXPR_ORDER
    }
    fn g(&self, x: &[f64]) -> DMatrix<f64> {
        self.dg(x, &[]).expect("order 0 always available")
    }
    fn dg(&self, x: &[f64], dirs: &[usize]) -> Result<DMatrix<f64>> {
        if dirs.len() > MAX_EXPR_ORDER {
            return Err(Error::InsufficientOrder { requested: MAX_EXPR_ORDER, required: dirs.len() });
        }
        let n = self.dim();
        let mut orders = vec![0; n];
        for &d in dirs {
            orders[d] += 1;
        }
        Ok(DMatrix::from_fn(n, n, |i, j| match &self.interp {
            Some(t) => t[i][j].eval_derivative(x, &orders),
            None => self.fd(i, j, x, dirs),
        }))
    }
}

/// Flat metric g = δ on [-π, π)^n, periodic.
pub fn flat_torus(n: usize) -> ExprMetric {
    let domain = Domain { lo: vec![-PI; n], hi: vec![PI; n], periodic: true };
    let table: Vec<Vec<String>> =
        (0..n).map(|i| (0..n).map(|j| if i == j { "1".into() } else { "0".into() }).collect()).collect();
    ExprMetric::new(domain, &table).expect("flat table parses")
}

/// Round unit sphere in (θ, φ) = (x1, x2) coordinates, g = diag(1, sin²θ),
/// on a band around the equator.
pub fn sphere_chart() -> ExprMetric {
    let half = 0.6;
    let domain = Domain { lo: vec![PI / 2.0 - half, -half], hi: vec![PI / 2.0 + half, half], periodic: false };
    ExprMetric::from_strs(domain, &[&["1", "0"], &["0", "pow(sin(x1), 2)"]]).expect("sphere table parses")
}

/// Periodic perturbation of the Euclidean metric on [-π, π)²:
/// g11 = 1 + A sin(f x1) cos(f x2), g22 = 1 + A cos(f x1) sin(f x2),
/// g12 = (A/4) sin(f (x1 + x2)).
pub fn perturbed_euclidean(amplitude: f64, frequency: f64) -> ExprMetric {
    let (a, f) = (amplitude, frequency);
    let domain = Domain { lo: vec![-PI; 2], hi: vec![PI; 2], periodic: true };
    let g11 = format!("1 + {a:e}*sin({f:e}*x1)*cos({f:e}*x2)");
    let g12 = format!("{:e}*sin({f:e}*x1 + {f:e}*x2)", a / 4.0);
    let g22 = format!("1 + {a:e}*cos({f:e}*x1)*sin({f:e}*x2)");
    ExprMetric::new(domain, &[vec![g11, g12.clone()], vec![g12, g22]]).expect("perturbed table parses")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_is_flat() {
        let m = flat_torus(2);
        assert!(m.is_flat());
        assert_eq!(m.g(&[0.3, 0.1]), DMatrix::identity(2, 2));
        assert_eq!(m.dg(&[0.3, 0.1], &[0, 1]).unwrap(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn derivative_keys_are_order_free() {
        let m = perturbed_euclidean(0.1, 1.0);
        let x = [0.2, -0.7];
        assert_eq!(m.dg(&x, &[0, 1]).unwrap(), m.dg(&x, &[1, 0]).unwrap());
        assert!(m.dg(&x, &[0, 0, 0, 0, 0]).is_err());
    }

    #[test]
    fn gridded_periodic_metric_matches_expression() {
        let m = perturbed_euclidean(0.05, 1.0);
        let d = m.domain().clone();
        let grid = d.grid(16);
        let values: Vec<Vec<Vec<f64>>> = (0..2)
            .map(|i| (0..2).map(|j| grid.sample(|x| m.g(x)[(i, j)])).collect())
            .collect();
        let gm = GridMetric::new(d, 16, values).unwrap();
        let x = [0.37, -1.2];
        assert!((gm.g(&x) - m.g(&x)).abs().max() < 1e-12);
        assert!((gm.dg(&x, &[0]).unwrap() - m.dg(&x, &[0]).unwrap()).abs().max() < 1e-11);
        assert!((gm.dg(&x, &[0, 1]).unwrap() - m.dg(&x, &[0, 1]).unwrap()).abs().max() < 1e-10);
    }

    #[test]
    fn gridded_bounded_metric_is_close() {
        let m = sphere_chart();
        let d = m.domain().clone();
        let grid = d.grid(32);
        let values: Vec<Vec<Vec<f64>>> = (0..2)
            .map(|i| (0..2).map(|j| grid.sample(|x| m.g(x)[(i, j)])).collect())
            .collect();
        let gm = GridMetric::new(d, 32, values).unwrap();
        let x = [1.5, 0.1];
        assert!((gm.g(&x) - m.g(&x)).abs().max() < 1e-3);
        assert!((gm.dg(&x, &[0]).unwrap() - m.dg(&x, &[0]).unwrap()).abs().max() < 1e-2);
    }

    #[test]
    fn singular_metric_detected() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(inverse_and_det(&g, &[0.0, 0.0]).is_err());
    }
}
