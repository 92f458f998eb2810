use crate::error::{Error, Result};
use crate::laplacian_forms::DiscreteOperator;
use crate::metric_charts::FormField;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use std::sync::OnceLock;

/// Largest operator handled by dense eigendecomposition.
pub const DENSE_DOF_LIMIT: usize = 20_000;

/// Relative weighted symmetry defect below which the operator is treated as self-adjoint.
pub const SYMMETRY_TOL: f64 = 1e-10;

struct Eigen {
    /// Cholesky factor of the weight.
    l: DMatrix<f64>,
    vectors: DMatrix<f64>,
    values: DVector<f64>,
}

/// exp(-tM) for an assembled operator M, with a cached spectral factorization
/// when M is self-adjoint in its weighted inner product.
pub struct DirectSolver<'a> {
    op: &'a DiscreteOperator,
    symmetric: bool,
    eigen: OnceLock<Option<Eigen>>,
}

impl<'a> DirectSolver<'a> {
    pub fn new(op: &'a DiscreteOperator) -> Self {
        let symmetric = op.symmetry_defect() < SYMMETRY_TOL;
        DirectSolver { op, symmetric, eigen: OnceLock::new() }
    }

    pub fn uses_eigen(&self) -> bool {
        self.symmetric && self.op.dofs() <= DENSE_DOF_LIMIT
    }

    fn eigen(&self) -> Option<&Eigen> {
        self.eigen
            .get_or_init(|| {
                if !self.uses_eigen() {
                    return None;
                }
                let dofs = self.op.dofs();
                let mut w = DMatrix::zeros(dofs, dofs);
                for c in 0..dofs {
                    let mut e = vec![0.0; dofs];
                    e[c] = 1.0;
                    w.set_column(c, &DVector::from_vec(self.op.weight_apply(&e)));
                }
                let l = w.cholesky()?.l();
                let m = self.op.to_dense();
                // S = Lᵀ M L^{-T} is symmetric when W M is.
                let lt = l.transpose();
                let lt_inv = lt.clone().try_inverse()?;
                let s = &lt * m * &lt_inv;
                let s = (&s + s.transpose()) * 0.5;
                let se = SymmetricEigen::new(s);
                Some(Eigen { l, vectors: se.eigenvectors, values: se.eigenvalues })
            })
            .as_ref()
    }

    /// Eigenvalues of the operator (self-adjoint path only), ascending.
    pub fn eigenvalues(&self) -> Option<Vec<f64>> {
        self.eigen().map(|e| {
            let mut v: Vec<f64> = e.values.iter().cloned().collect();
            v.sort_by(f64::total_cmp);
            v
        })
    }

    fn check(&self, omega: &FormField) -> Result<()> {
        let m = self.op.grid.len();
        if omega.grid != self.op.grid || omega.p != self.op.p || omega.num_components() * m != self.op.dofs() {
            return Err(Error::DimensionMismatch { expected: self.op.dofs(), got: omega.num_components() * omega.grid.len() });
        }
        Ok(())
    }

    pub fn solve(&self, omega: &FormField, t: f64) -> Result<FormField> {
        self.check(omega)?;
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::InvalidParameter(format!("time must be finite and nonnegative, got {t}")));
        }
        if t == 0.0 {
            return Ok(omega.clone());
        }
        let x = omega.to_vec();
        let y = match self.eigen() {
            Some(e) => {
                let z = e.l.transpose() * DVector::from_vec(x);
                let mut c = e.vectors.transpose() * z;
                for (ci, lam) in c.iter_mut().zip(e.values.iter()) {
                    *ci *= (-t * lam).exp();
                }
                let z = &e.vectors * c;
                let y = e.l.transpose().solve_upper_triangular(&z).expect("Cholesky factor is invertible");
                y.as_slice().to_vec()
            }
            None => taylor_action(self.op, &x, t),
        };
        let mut out = FormField::from_vec(&omega.grid, omega.p, &y)?;
        out.time = Some(t);
        Ok(out)
    }

    /// Solutions at several times, stepping through them in increasing order.
    pub fn solve_many(&self, omega: &FormField, times: &[f64]) -> Result<Vec<FormField>> {
        self.check(omega)?;
        if self.eigen().is_some() {
            return times.iter().map(|&t| self.solve(omega, t)).collect();
        }
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
        let mut out = vec![None; times.len()];
        let (mut cur, mut now) = (omega.to_vec(), 0.0);
        for i in order {
            let t = times[i];
            if !(t >= 0.0) || !t.is_finite() {
                return Err(Error::InvalidParameter(format!("time must be finite and nonnegative, got {t}")));
            }
            if t > now {
                cur = taylor_action(self.op, &cur, t - now);
                now = t;
            }
            let mut f = FormField::from_vec(&omega.grid, omega.p, &cur)?;
            f.time = Some(t);
            out[i] = Some(f);
        }
        Ok(out.into_iter().map(|f| f.expect("every time visited")).collect())
    }
}

/// exp(-tM)x by truncated Taylor series over substeps with ‖τM‖_∞ ≤ 1.
fn taylor_action(op: &DiscreteOperator, x: &[f64], t: f64) -> Vec<f64> {
    let norm = op.matrix.norm_inf();
    let steps = ((t * norm).ceil() as usize).max(1);
    let tau = t / steps as f64;
    let mut v = x.to_vec();
    for _ in 0..steps {
        let mut term = v.clone();
        let mut acc = v.clone();
        for j in 1..60 {
            let mt = op.apply(&term);
            let scale = -tau / j as f64;
            term = mt.iter().map(|a| a * scale).collect();
            let tn = term.iter().fold(0.0f64, |m, a| m.max(a.abs()));
            for (a, b) in acc.iter_mut().zip(&term) {
                *a += b;
            }
            let an = acc.iter().fold(0.0f64, |m, a| m.max(a.abs()));
            if tn <= f64::EPSILON * an {
                break;
            }
        }
        v = acc;
    }
    v
}

/// exp(-t·op) ω.
pub fn direct_solve(omega: &FormField, t: f64, op: &DiscreteOperator) -> Result<FormField> {
    DirectSolver::new(op).solve(omega, t)
}

pub fn direct_solve_many(omega: &FormField, times: &[f64], op: &DiscreteOperator) -> Result<Vec<FormField>> {
    DirectSolver::new(op).solve_many(omega, times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::euclid_heat::heat_apply_grid;
    use crate::laplacian_forms::assemble_discrete;
    use crate::metric_charts::{flat_torus, perturbed_euclidean, ChartMetric};

    #[test]
    fn time_zero_is_identity() {
        let m = flat_torus(2);
        let grid = m.domain().grid(8);
        let op = assemble_discrete(&m, 0, &grid).unwrap();
        let w = FormField::from_fn(&grid, 0, |_, x| x[0].cos() + 0.3).unwrap();
        assert_eq!(direct_solve(&w, 0.0, &op).unwrap().comps, w.comps);
    }

    #[test]
    fn eigenvector_decays_exactly() {
        let m = flat_torus(2);
        let n = 16;
        let grid = m.domain().grid(n);
        let op = assemble_discrete(&m, 0, &grid).unwrap();
        let w = FormField::from_fn(&grid, 0, |_, x| (2.0 * x[0]).sin() * x[1].cos()).unwrap();
        let h = grid.h[0];
        let lam: f64 = 4.0 / (h * h) * ((h).sin().powi(2) + (h / 2.0).sin().powi(2));
        let u = direct_solve(&w, 0.3, &op).unwrap();
        for (a, b) in u.comps[0].iter().zip(&w.comps[0]) {
            assert!((a - (-0.3 * lam).exp() * b).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_torus_matches_spectral_heat() {
        let m = flat_torus(2);
        let mut errs = Vec::new();
        for n in [16, 32] {
            let grid = m.domain().grid(n);
            let op = assemble_discrete(&m, 0, &grid).unwrap();
            let w = FormField::from_fn(&grid, 0, |_, x| (x[0].cos() + x[1].sin()).exp()).unwrap();
            let u = direct_solve(&w, 0.5, &op).unwrap();
            let hv = heat_apply_grid(&w.comps[0], &grid, 0.5, &[0, 0]).unwrap().values;
            errs.push(u.comps[0].iter().zip(&hv).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
        assert!(errs[1] < errs[0] / 3.5, "{errs:?}");
    }

    #[test]
    fn taylor_agrees_with_eigen() {
        let m = perturbed_euclidean(0.03, 1.0);
        let grid = m.domain().grid(10);
        let op = assemble_discrete(&m, 0, &grid).unwrap();
        let w = FormField::from_fn(&grid, 0, |_, x| (x[0] - 0.4).cos() * x[1].sin()).unwrap();
        let s = DirectSolver::new(&op);
        assert!(s.uses_eigen());
        let a = s.solve(&w, 0.7).unwrap();
        let b = taylor_action(&op, &w.to_vec(), 0.7);
        for (x, y) in a.to_vec().iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn forms_use_taylor_and_step_through_times() {
        let m = perturbed_euclidean(0.03, 1.0);
        let grid = m.domain().grid(10);
        let op = assemble_discrete(&m, 1, &grid).unwrap();
        let s = DirectSolver::new(&op);
        assert!(!s.uses_eigen());
        let w = FormField::from_fn(&grid, 1, |j, x| (x[j[0]]).sin()).unwrap();
        let many = s.solve_many(&w, &[0.4, 0.1]).unwrap();
        let one = s.solve(&w, 0.4).unwrap();
        for (x, y) in many[0].to_vec().iter().zip(one.to_vec()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let m = flat_torus(2);
        let op = assemble_discrete(&m, 0, &m.domain().grid(8)).unwrap();
        let w = FormField::zeros(&m.domain().grid(6), 0).unwrap();
        assert!(matches!(direct_solve(&w, 1.0, &op), Err(Error::DimensionMismatch { .. })));
    }
}
