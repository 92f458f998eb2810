use super::form_inner_block;
use super::jets::{hodge_coeffs, pairs};
use crate::error::{Error, Result};
use crate::grid::{Boundary, Grid};
use crate::metric_charts::{form_components, inverse_and_det, ChartMetric, MetricOnGrid};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from per-row (col, value) lists; duplicates are summed, columns sorted.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for mut row in rows.iter().cloned() {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix { nrows: rows.len(), ncols, indptr, indices, values }
    }

    pub fn from_triplets(nrows: usize, ncols: usize, trips: &[Triplet]) -> Self {
        let mut rows = vec![Vec::new(); nrows];
        for t in trips {
            rows[t.row].push((t.col, t.value));
        }
        Self::from_rows(ncols, rows)
    }

    pub fn triplets(&self) -> Vec<Triplet> {
        (0..self.nrows)
            .flat_map(|r| {
                (self.indptr[r]..self.indptr[r + 1]).map(move |e| Triplet { row: r, col: self.indices[e], value: self.values[e] })
            })
            .collect()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = &self.indices[self.indptr[r]..self.indptr[r + 1]];
        span.binary_search(&c).map_or(0.0, |e| self.values[self.indptr[r] + e])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows)
            .into_par_iter()
            .map(|r| (self.indptr[r]..self.indptr[r + 1]).map(|e| self.values[e] * x[self.indices[e]]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for t in self.triplets() {
            m[(t.row, t.col)] += t.value;
        }
        m
    }

    /// Max absolute row sum (the ∞-norm).
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|r| self.values[self.indptr[r]..self.indptr[r + 1]].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Discretized nonnegative Hodge Laplacian on all stored components of p-forms.
/// Degrees of freedom are component-major: dof = c * grid.len() + k.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub p: usize,
    pub grid: Grid,
    pub boundary: Boundary,
    pub h: Vec<f64>,
    pub matrix: CsrMatrix,
    /// Per grid point: √g · cell volume times the induced inner product on components.
    pub weight_blocks: Vec<DMatrix<f64>>,
}

impl DiscreteOperator {
    pub fn dofs(&self) -> usize {
        self.matrix.nrows
    }

    pub fn components(&self) -> usize {
        self.dofs() / self.grid.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.mul_vec(x)
    }

    /// W x for the block weight.
    pub fn weight_apply(&self, x: &[f64]) -> Vec<f64> {
        let m = self.grid.len();
        let c = self.components();
        let mut out = vec![0.0; x.len()];
        for k in 0..m {
            let w = &self.weight_blocks[k];
            for a in 0..c {
                out[a * m + k] = (0..c).map(|b| w[(a, b)] * x[b * m + k]).sum();
            }
        }
        out
    }

    /// True when every weight block is diagonal.
    pub fn weight_is_diagonal(&self) -> bool {
        self.weight_blocks.iter().all(|w| {
            (0..w.nrows()).all(|a| (0..w.ncols()).all(|b| a == b || w[(a, b)] == 0.0))
        })
    }

    /// ‖WM - (WM)^T‖_F / ‖WM‖_F.
    pub fn symmetry_defect(&self) -> f64 {
        let m = self.grid.len();
        let c = self.components();
        let mut wm: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.dofs()];
        for t in self.matrix.triplets() {
            let k = t.row % m;
            for a in 0..c {
                let w = self.weight_blocks[k][(a, t.row / m)];
                if w != 0.0 {
                    wm[a * m + k].push((t.col, w * t.value));
                }
            }
        }
        let wm = CsrMatrix::from_rows(self.dofs(), wm);
        let (mut num, mut den) = (0.0, 0.0);
        for t in wm.triplets() {
            let d = t.value - wm.get(t.col, t.row);
            num += d * d;
            den += t.value * t.value;
        }
        // Entries present only in the transpose pattern.
        for t in wm.triplets() {
            if wm.indices[wm.indptr[t.col]..wm.indptr[t.col + 1]].binary_search(&t.row).is_err() {
                num += t.value * t.value;
            }
        }
        if den == 0.0 {
            0.0
        } else {
            (num / den).sqrt()
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.matrix.to_dense()
    }

    /// Euclidean-weighted L² norm: sqrt(xᵀ W x).
    pub fn weighted_norm(&self, x: &[f64]) -> f64 {
        DVector::from_column_slice(x).dot(&DVector::from_vec(self.weight_apply(x))).max(0.0).sqrt()
    }
}

fn conductivity(metric: &dyn ChartMetric, x: &[f64]) -> Result<DMatrix<f64>> {
    let g = metric.g(x);
    let (ginv, det) = inverse_and_det(&g, x)?;
    Ok(ginv * det.sqrt())
}

fn half_point(grid: &Grid, k: usize, axis: usize, sign: f64) -> Vec<f64> {
    let mut x = grid.point(k);
    x[axis] += sign * 0.5 * grid.h[axis];
    if grid.boundary == Boundary::Periodic {
        grid.wrap(&mut x);
    }
    x
}

/// Second-order stencil discretization of the nonnegative Hodge Laplacian.
/// Functions use the conservative form -(1/√g) Σ ∂_a(√g g^{ab} ∂_b f), which
/// is exactly symmetric in the √g-weighted inner product; forms use the
/// coefficient stencil of the Weitzenböck expansion.
pub fn assemble_discrete(metric: &dyn ChartMetric, p: usize, grid: &Grid) -> Result<DiscreteOperator> {
    let n = grid.dim;
    if p > n {
        return Err(Error::DegreeTooLarge { p, n });
    }
    if metric.dim() != n {
        return Err(Error::DimensionMismatch { expected: metric.dim(), got: n });
    }
    let m = grid.len();
    let cell = grid.cell_volume();
    let ginv_pts: Vec<(DMatrix<f64>, f64)> = (0..m)
        .into_par_iter()
        .map(|k| {
            let x = grid.point(k);
            inverse_and_det(&metric.g(&x), &x)
        })
        .collect::<Result<_>>()?;
    let weight_blocks: Vec<DMatrix<f64>> =
        ginv_pts.iter().map(|(gi, det)| form_inner_block(gi, p) * (det.sqrt() * cell)).collect();

    let rows: Vec<Vec<(usize, f64)>> = if p == 0 {
        let cond: Vec<DMatrix<f64>> = (0..m).into_par_iter().map(|k| conductivity(metric, &grid.point(k))).collect::<Result<_>>()?;
        (0..m)
            .into_par_iter()
            .map(|k| -> Result<Vec<(usize, f64)>> {
                let mut row = Vec::new();
                let sd = ginv_pts[k].1.sqrt();
                for a in 0..n {
                    let h2 = grid.h[a] * grid.h[a];
                    for (sign, off) in [(1.0, 1isize), (-1.0, -1)] {
                        let c = conductivity(metric, &half_point(grid, k, a, sign))?[(a, a)] / (sd * h2);
                        row.push((k, c));
                        if let Some(j) = grid.shift(k, a, off) {
                            row.push((j, -c));
                        }
                    }
                    for b in (0..n).filter(|&b| b != a) {
                        let scale = 1.0 / (4.0 * grid.h[a] * grid.h[b] * sd);
                        for (sa, oa) in [(1.0, 1isize), (-1.0, -1)] {
                            let Some(ka) = grid.shift(k, a, oa) else { continue };
                            let c = cond[ka][(a, b)];
                            for (sb, ob) in [(1.0, 1isize), (-1.0, -1)] {
                                if let Some(j) = grid.shift(ka, b, ob) {
                                    row.push((j, -sa * sb * c * scale));
                                }
                            }
                        }
                    }
                }
                Ok(row)
            })
            .collect::<Result<_>>()?
    } else {
        let mg = MetricOnGrid::new(metric, grid)?;
        let pr = pairs(n);
        let cc = form_components(n, p).len();
        let per_point: Vec<_> =
            (0..m).into_par_iter().map(|k| hodge_coeffs(n, p, &mg.ginv[k], &mg.gamma[k], &mg.dgamma[k])).collect();
        (0..cc * m)
            .into_par_iter()
            .map(|dof| -> Result<Vec<(usize, f64)>> {
                let (kk, k) = (dof / m, dof % m);
                let pc = &per_point[k];
                let mut row = Vec::new();
                for l in 0..cc {
                    let base = kk * cc + l;
                    let col = |j: usize| l * m + j;
                    let z = pc.zeroth[base];
                    if z != 0.0 {
                        row.push((col(k), z));
                    }
                    for a in 0..n {
                        let q = pc.first[base * n + a];
                        if q != 0.0 {
                            let s = q / (2.0 * grid.h[a]);
                            if let Some(j) = grid.shift(k, a, 1) {
                                row.push((col(j), s));
                            }
                            if let Some(j) = grid.shift(k, a, -1) {
                                row.push((col(j), -s));
                            }
                        }
                    }
                    for (q, &(a, b)) in pr.iter().enumerate() {
                        let s = pc.second[base * pr.len() + q];
                        if s == 0.0 {
                            continue;
                        }
                        if a == b {
                            let w = s / (grid.h[a] * grid.h[a]);
                            row.push((col(k), -2.0 * w));
                            for off in [1isize, -1] {
                                if let Some(j) = grid.shift(k, a, off) {
                                    row.push((col(j), w));
                                }
                            }
                        } else {
                            let w = s / (4.0 * grid.h[a] * grid.h[b]);
                            for (sa, oa) in [(1.0, 1isize), (-1.0, -1)] {
                                let Some(ka) = grid.shift(k, a, oa) else { continue };
                                for (sb, ob) in [(1.0, 1isize), (-1.0, -1)] {
                                    if let Some(j) = grid.shift(ka, b, ob) {
                                        row.push((col(j), sa * sb * w));
                                    }
                                }
                            }
                        }
                    }
                }
                Ok(row)
            })
            .collect::<Result<_>>()?
    };
    let dofs = rows.len();
    let mut rows = rows;
    for r in rows.iter_mut() {
        r.retain(|e| e.1 != 0.0);
    }
    Ok(DiscreteOperator {
        p,
        grid: grid.clone(),
        boundary: grid.boundary,
        h: grid.h.clone(),
        matrix: CsrMatrix::from_rows(dofs, rows),
        weight_blocks,
    })
}
