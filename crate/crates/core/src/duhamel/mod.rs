//! Duhamel series for exp(-tΔ_φ) around the Euclidean heat semigroup, its
//! truncation control, and a direct solver used as oracle.

mod direct;

pub use direct::{direct_solve, direct_solve_many, DirectSolver, DENSE_DOF_LIMIT, SYMMETRY_TOL};

use crate::error::{Error, Result};
use crate::euclid_heat::heat_apply_grid;
use crate::grid::lr_norm;
use crate::laplacian_forms::PerturbationOperator;
use crate::metric_charts::{ChartMetric, FormField, MetricOnGrid};
use crate::quadrature::gauss_legendre_on;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesConfig {
    /// Truncation order J.
    pub order: usize,
    /// Gauss–Legendre nodes per convolution.
    pub nodes: usize,
    pub delta: f64,
    pub eps: f64,
    /// Derivative order k entering the ratio formula (0 for the solution itself).
    pub k: usize,
    /// Exponent r of the norms reported per term.
    pub r: f64,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        SeriesConfig { order: 3, nodes: 32, delta: 0.1, eps: 0.05, k: 0, r: 2.0 }
    }
}

impl SeriesConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidParameter(format!("eps must lie in (0, 1), got {}", self.eps)));
        }
        if self.nodes == 0 {
            return Err(Error::InvalidParameter("at least one quadrature node is required".into()));
        }
        if !(self.r >= 1.0) {
            return Err(Error::InvalidParameter(format!("r must be at least 1, got {}", self.r)));
        }
        Ok(())
    }

    /// Time shape of the contraction ratio: t^{-1-k/2} on (δ, 1), t^{-(1+k)/2} for t ≥ 1.
    pub fn ratio_shape(&self, t: f64) -> f64 {
        let k = self.k as f64;
        if t < 1.0 {
            t.powf(-1.0 - k / 2.0)
        } else {
            t.powf(-(1.0 + k) / 2.0)
        }
    }

    /// ρ(t) = δ^{1+k/2} · shape(t), the ratio the smallness condition εc ≤ δ^{1+k/2} guarantees.
    pub fn rho(&self, t: f64) -> f64 {
        self.delta.powf(1.0 + self.k as f64 / 2.0) * self.ratio_shape(t)
    }
}

/// Geometric majorization of the omitted terms: first_omitted / (1 - ρ(t)).
pub fn tail_bound(cfg: &SeriesConfig, t: f64, first_omitted: f64) -> Result<f64> {
    tail_from_ratio(cfg.rho(t), first_omitted)
}

pub fn tail_from_ratio(rho: f64, first_omitted: f64) -> Result<f64> {
    if !(rho < 1.0) {
        return Err(Error::SeriesDivergent { rho });
    }
    if first_omitted == 0.0 {
        return Ok(0.0);
    }
    Ok(first_omitted / (1.0 - rho))
}

/// ∫₀ᵗ A(t-s) B(s) ω ds by open Gauss–Legendre quadrature.
pub fn time_convolve<A, B>(a: A, b: B, t: f64, omega: &FormField, nodes: usize) -> Result<FormField>
where
    A: Fn(f64, &FormField) -> Result<FormField> + Sync,
    B: Fn(f64, &FormField) -> Result<FormField> + Sync,
{
    if !(t > 0.0) {
        return Err(Error::NonPositiveTime(t));
    }
    let (xs, ws) = gauss_legendre_on(nodes, 0.0, t);
    let parts: Vec<FormField> = xs.par_iter().map(|&s| b(s, omega).and_then(|bs| a(t - s, &bs))).collect::<Result<_>>()?;
    let mut out = FormField::zeros(&omega.grid, omega.p)?;
    for (part, w) in parts.iter().zip(&ws) {
        axpy(&mut out, *w, part);
    }
    Ok(out)
}

fn axpy(acc: &mut FormField, w: f64, x: &FormField) {
    for (a, b) in acc.comps.iter_mut().zip(&x.comps) {
        for (u, v) in a.iter_mut().zip(b) {
            *u += w * v;
        }
    }
}

/// Euclidean heat semigroup applied componentwise.
pub fn flat_heat(omega: &FormField, t: f64) -> Result<FormField> {
    if t == 0.0 {
        return Ok(omega.clone());
    }
    let comps = omega
        .comps
        .iter()
        .map(|c| heat_apply_grid(c, &omega.grid, t, &vec![0; omega.grid.dim]).map(|h| h.values))
        .collect::<Result<_>>()?;
    FormField::from_components(&omega.grid, omega.p, comps)
}

/// Result of a truncated Duhamel expansion.
#[derive(Debug, Clone)]
pub struct DuhamelResult {
    pub u: FormField,
    pub t: f64,
    /// ‖T_j(t)‖_r for j = 0..=J (Euclidean coefficient norm, grid quadrature).
    pub term_norms: Vec<f64>,
    /// ‖T_{j+1}‖ / ‖T_j‖.
    pub ratios: Vec<f64>,
    /// ρ(t) from the configured δ.
    pub rho: f64,
    /// Estimated first omitted term, max(ρ, last measured ratio)·‖T_J‖.
    pub first_omitted: f64,
    pub tail: f64,
}

/// Truncated Duhamel series on a fixed grid. Inner solutions at quadrature
/// times are memoized; times are products of node abscissae, keyed by the
/// sorted node multiset so reordered products hit the same entry.
pub struct DuhamelSolver {
    pub cfg: SeriesConfig,
    y: PerturbationOperator,
    abscissae: Vec<f64>,
    weights: Vec<f64>,
}

type Memo = Mutex<HashMap<(usize, Vec<u16>), Arc<FormField>>>;

impl DuhamelSolver {
    pub fn new(metric: &dyn ChartMetric, grid: &crate::grid::Grid, p: usize, cfg: SeriesConfig) -> Result<Self> {
        cfg.validate()?;
        let mg = MetricOnGrid::new(metric, grid)?;
        let y = PerturbationOperator::new(&mg, p)?;
        let (abscissae, weights) = gauss_legendre_on(cfg.nodes, 0.0, 1.0);
        Ok(DuhamelSolver { cfg, y, abscissae, weights })
    }

    pub fn perturbation(&self) -> &PerturbationOperator {
        &self.y
    }

    fn time_of(&self, t: f64, path: &[u16]) -> f64 {
        path.iter().fold(t, |acc, &i| acc * self.abscissae[i as usize])
    }

    /// T_j at time t·Π x_path: T_0(s) = H(s)ω, T_j(s) = ∫₀ˢ H(s-σ) Y T_{j-1}(σ) dσ.
    fn term(&self, omega: &FormField, t: f64, j: usize, path: &[u16], memo: &Memo) -> Result<Arc<FormField>> {
        let key = (j, path.to_vec());
        if let Some(v) = memo.lock().expect("memo lock").get(&key) {
            return Ok(v.clone());
        }
        let s = self.time_of(t, path);
        let value = if j == 0 {
            flat_heat(omega, s)?
        } else {
            let parts: Vec<FormField> = (0..self.abscissae.len())
                .into_par_iter()
                .map(|i| -> Result<FormField> {
                    let mut child = path.to_vec();
                    child.push(i as u16);
                    child.sort_unstable();
                    let inner = self.term(omega, t, j - 1, &child, memo)?;
                    flat_heat(&self.y.apply(&inner), s * (1.0 - self.abscissae[i]))
                })
                .collect::<Result<_>>()?;
            let mut acc = FormField::zeros(&omega.grid, omega.p)?;
            for (part, w) in parts.iter().zip(&self.weights) {
                axpy(&mut acc, s * w, part);
            }
            acc
        };
        let value = Arc::new(value);
        memo.lock().expect("memo lock").insert(key, value.clone());
        Ok(value)
    }

    /// All terms T_0..T_J at time t.
    pub fn terms(&self, omega: &FormField, t: f64) -> Result<Vec<FormField>> {
        if !(t > 0.0) {
            return Err(Error::NonPositiveTime(t));
        }
        let rho = self.cfg.rho(t);
        if !(rho < 1.0) {
            return Err(Error::SeriesDivergent { rho });
        }
        let memo: Memo = Mutex::new(HashMap::new());
        (0..=self.cfg.order).map(|j| self.term(omega, t, j, &[], &memo).map(|a| (*a).clone())).collect()
    }

    pub fn solve(&self, omega: &FormField, t: f64) -> Result<DuhamelResult> {
        let terms = self.terms(omega, t)?;
        let dv = vec![omega.grid.cell_volume(); omega.grid.len()];
        let term_norms: Vec<f64> = terms
            .iter()
            .map(|f| {
                let modulus: Vec<f64> =
                    (0..f.grid.len()).map(|k| f.comps.iter().map(|c| c[k] * c[k]).sum::<f64>().sqrt()).collect();
                lr_norm(&modulus, self.cfg.r, &dv)
            })
            .collect();
        let ratios: Vec<f64> = term_norms
            .windows(2)
            .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 })
            .collect();
        let rho = self.cfg.rho(t);
        let last = *term_norms.last().expect("at least T_0");
        let ratio = ratios.last().copied().unwrap_or(0.0).max(rho);
        let first_omitted = ratio * last;
        let tail = tail_from_ratio(ratio, first_omitted)?;
        let mut u = FormField::zeros(&omega.grid, omega.p)?;
        for f in &terms {
            axpy(&mut u, 1.0, f);
        }
        u.time = Some(t);
        Ok(DuhamelResult { u, t, term_norms, ratios, rho, first_omitted, tail })
    }
}

/// Truncated Duhamel expansion of exp(-tΔ_φ)ω on ω's grid.
pub fn duhamel_solve(metric: &dyn ChartMetric, omega: &FormField, t: f64, cfg: &SeriesConfig) -> Result<DuhamelResult> {
    DuhamelSolver::new(metric, &omega.grid, omega.p, cfg.clone())?.solve(omega, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Boundary, Grid};
    use crate::metric_charts::{flat_torus, perturbed_euclidean, ChartMetric};

    fn bump(grid: &Grid) -> FormField {
        FormField::from_fn(grid, 0, |_, x| (-(x[0] * x[0] + x[1] * x[1]) / 0.5).exp()).unwrap()
    }

    fn max_diff(a: &FormField, b: &FormField) -> f64 {
        a.to_vec().iter().zip(b.to_vec()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn convolve_zero_and_identity() {
        let grid = Grid::new(&[-1.0; 2], &[1.0; 2], 6, Boundary::Periodic);
        let w = bump(&grid);
        let id = |_: f64, f: &FormField| Ok(f.clone());
        let zero = |_: f64, f: &FormField| FormField::zeros(&f.grid, f.p);
        let z = time_convolve(id, zero, 0.7, &w, 8).unwrap();
        assert!(z.to_vec().iter().all(|v| *v == 0.0));
        let i = time_convolve(id, id, 0.7, &w, 8).unwrap();
        for (a, b) in i.to_vec().iter().zip(w.to_vec()) {
            assert!((a - 0.7 * b).abs() < 1e-14);
        }
        assert!(time_convolve(id, id, 0.0, &w, 8).is_err());
    }

    #[test]
    fn convolve_semigroup() {
        let m = flat_torus(2);
        let grid = m.domain().grid(16);
        let w = bump(&grid);
        let got = time_convolve(|s, f| flat_heat(f, s), |s, f| flat_heat(f, s), 0.4, &w, 6).unwrap();
        let want = flat_heat(&w, 0.4).unwrap();
        assert!(max_diff(&got, &FormField::from_vec(&grid, 0, &want.to_vec().iter().map(|v| 0.4 * v).collect::<Vec<_>>()).unwrap()) < 1e-12);
    }

    #[test]
    fn flat_metric_collapses() {
        let m = flat_torus(2);
        let grid = m.domain().grid(16);
        let w = bump(&grid);
        for order in 0..3 {
            let cfg = SeriesConfig { order, nodes: 4, delta: 0.1, ..Default::default() };
            let r = duhamel_solve(&m, &w, 0.5, &cfg).unwrap();
            assert_eq!(r.u.comps, flat_heat(&w, 0.5).unwrap().comps);
        }
    }

    #[test]
    fn tail_bound_examples() {
        assert_eq!(tail_from_ratio(0.5, 1.0).unwrap(), 2.0);
        assert_eq!(tail_from_ratio(0.5, 0.0).unwrap(), 0.0);
        assert!(matches!(tail_from_ratio(1.0, 1.0), Err(Error::SeriesDivergent { .. })));
        let cfg = SeriesConfig { delta: 0.25, ..Default::default() };
        assert!((cfg.rho(0.5) - 0.5).abs() < 1e-15);
        assert!((cfg.rho(4.0) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn refuses_below_delta() {
        let m = perturbed_euclidean(0.03, 1.0);
        let grid = m.domain().grid(8);
        let cfg = SeriesConfig { delta: 0.3, nodes: 4, order: 1, ..Default::default() };
        let err = duhamel_solve(&m, &bump(&grid), 0.2, &cfg).unwrap_err();
        assert!(err.to_string().contains("series not convergent"));
    }

    #[test]
    fn correction_converges_to_direct_correction() {
        // Compare u_φ - u_flat so the shared discretization error of the flat part cancels.
        let m = perturbed_euclidean(0.03, 1.0);
        let flat = flat_torus(2);
        let grid = m.domain().grid(16);
        let w = bump(&grid);
        let op = crate::laplacian_forms::assemble_discrete(&m, 0, &grid).unwrap();
        let op0 = crate::laplacian_forms::assemble_discrete(&flat, 0, &grid).unwrap();
        let a = direct_solve(&w, 0.5, &op).unwrap().to_vec();
        let b = direct_solve(&w, 0.5, &op0).unwrap().to_vec();
        let want: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let solver = DuhamelSolver::new(&m, &grid, 0, SeriesConfig { order: 2, nodes: 12, delta: 0.2, ..Default::default() }).unwrap();
        let terms = solver.terms(&w, 0.5).unwrap();
        let mut acc = vec![0.0; grid.len()];
        let mut errs = vec![want.iter().map(|v| v.abs()).fold(0.0, f64::max)];
        for t in &terms[1..] {
            for (x, y) in acc.iter_mut().zip(t.to_vec()) {
                *x += y;
            }
            errs.push(acc.iter().zip(&want).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        }
        assert!(errs[1] < 0.2 * errs[0] && errs[2] <= errs[1], "{errs:?}");
    }
}
