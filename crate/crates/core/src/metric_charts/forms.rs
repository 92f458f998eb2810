use super::{inverse_and_det, ChartMetric};
use crate::error::{Error, Result};
use crate::grid::{lr_norm, partial, Grid};
use nalgebra::DMatrix;
use rayon::prelude::*;

/// Strictly increasing index tuples of length p from 0..n, lexicographic.
pub fn form_components(n: usize, p: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, p, &mut Vec::new(), &mut out);
    out
}

/// Map an ordered index tuple to (sign, stored component); `None` when an
/// index repeats.
pub fn sorted_component(n: usize, idx: &[usize]) -> Option<(f64, usize)> {
    let mut v = idx.to_vec();
    let mut sign = 1.0;
    for i in 0..v.len() {
        for j in 0..v.len() - 1 - i {
            if v[j] > v[j + 1] {
                v.swap(j, j + 1);
                sign = -sign;
            } else if v[j] == v[j + 1] {
                return None;
            }
        }
    }
    if v.windows(2).any(|w| w[0] == w[1]) {
        return None;
    }
    // Rank of v among the lexicographic combinations.
    let p = v.len();
    let mut rank = 0;
    let mut prev = 0;
    for (s, &x) in v.iter().enumerate() {
        for c in prev..x {
            rank += binomial(n - c - 1, p - s - 1);
        }
        prev = x + 1;
    }
    Some((sign, rank))
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn factorial(p: usize) -> f64 {
    (1..=p).map(|v| v as f64).product()
}

/// A p-form on a chart grid, stored on strictly increasing multi-indices.
#[derive(Debug, Clone, PartialEq)]
pub struct FormField {
    pub p: usize,
    pub grid: Grid,
    pub comps: Vec<Vec<f64>>,
    pub time: Option<f64>,
}

impl FormField {
    pub fn zeros(grid: &Grid, p: usize) -> Result<Self> {
        if p > grid.dim {
            return Err(Error::DegreeTooLarge { p, n: grid.dim });
        }
        let c = form_components(grid.dim, p).len();
        Ok(FormField { p, grid: grid.clone(), comps: vec![vec![0.0; grid.len()]; c], time: None })
    }

    /// Sample `f(J, x)` for each stored J.
    pub fn from_fn<F: Fn(&[usize], &[f64]) -> f64>(grid: &Grid, p: usize, f: F) -> Result<Self> {
        let mut out = Self::zeros(grid, p)?;
        for (c, j) in form_components(grid.dim, p).iter().enumerate() {
            out.comps[c] = grid.sample(|x| f(j, x));
        }
        Ok(out)
    }

    pub fn from_components(grid: &Grid, p: usize, comps: Vec<Vec<f64>>) -> Result<Self> {
        let expected = form_components(grid.dim, p).len();
        if p > grid.dim {
            return Err(Error::DegreeTooLarge { p, n: grid.dim });
        }
        if comps.len() != expected || comps.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::DimensionMismatch { expected, got: comps.len() });
        }
        Ok(FormField { p, grid: grid.clone(), comps, time: None })
    }

    pub fn num_components(&self) -> usize {
        self.comps.len()
    }

    /// Coefficient α_K for an arbitrary ordered K at grid point `k`.
    pub fn get(&self, idx: &[usize], k: usize) -> f64 {
        match sorted_component(self.grid.dim, idx) {
            Some((s, c)) => s * self.comps[c][k],
            None => 0.0,
        }
    }

    /// Flatten to one vector, component-major.
    pub fn to_vec(&self) -> Vec<f64> {
        self.comps.concat()
    }

    pub fn from_vec(grid: &Grid, p: usize, v: &[f64]) -> Result<Self> {
        let m = grid.len();
        let comps = v.chunks(m).map(|c| c.to_vec()).collect();
        Self::from_components(grid, p, comps)
    }

    /// Full antisymmetric tensor of rank p, component [K] over n^p ordered tuples.
    pub fn to_tensor(&self) -> TensorField {
        let n = self.grid.dim;
        let size = n.pow(self.p as u32);
        let data = (0..size)
            .map(|flat| {
                let idx = unflatten(flat, n, self.p);
                match sorted_component(n, &idx) {
                    Some((s, c)) => self.comps[c].iter().map(|v| s * v).collect(),
                    None => vec![0.0; self.grid.len()],
                }
            })
            .collect();
        TensorField { rank: self.p, grid: self.grid.clone(), data }
    }

    /// Pointwise |α|_g.
    pub fn modulus(&self, mg: &MetricOnGrid) -> Vec<f64> {
        tensor_modulus(mg, &self.to_tensor(), self.p)
    }

    /// ‖α‖_{L^r} with the Riemannian volume element.
    pub fn lr_norm(&self, mg: &MetricOnGrid, r: f64) -> f64 {
        lr_norm(&self.modulus(mg), r, &mg.volume)
    }

    /// Plain Euclidean L^2 norm of the stored coefficients (grid quadrature).
    pub fn coefficient_l2(&self) -> f64 {
        let dv = self.grid.cell_volume();
        self.comps.iter().flatten().map(|v| v * v * dv).sum::<f64>().sqrt()
    }
}

pub(crate) fn unflatten(mut flat: usize, n: usize, rank: usize) -> Vec<usize> {
    let mut idx = vec![0; rank];
    for s in (0..rank).rev() {
        idx[s] = flat % n;
        flat /= n;
    }
    idx
}

/// A covariant tensor field of given rank on a grid, all n^rank components.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    pub rank: usize,
    pub grid: Grid,
    pub data: Vec<Vec<f64>>,
}

/// Metric quantities cached at every grid point.
#[derive(Debug, Clone)]
pub struct MetricOnGrid {
    pub grid: Grid,
    pub flat: bool,
    pub g: Vec<DMatrix<f64>>,
    pub ginv: Vec<DMatrix<f64>>,
    pub sqrt_det: Vec<f64>,
    /// sqrt(det g) times the cell volume.
    pub volume: Vec<f64>,
    /// Γ^i_{kj} per point, flattened [i][k][j].
    pub gamma: Vec<Vec<f64>>,
    /// ∂_m Γ^i_{kj} per point, flattened [m][i][k][j].
    pub dgamma: Vec<Vec<f64>>,
}

impl MetricOnGrid {
    pub fn new(metric: &dyn ChartMetric, grid: &Grid) -> Result<Self> {
        let n = grid.dim;
        let cell = grid.cell_volume();
        let per: Vec<_> = (0..grid.len())
            .into_par_iter()
            .map(|k| -> Result<_> {
                let x = grid.point(k);
                let g = metric.g(&x);
                let (ginv, det) = inverse_and_det(&g, &x)?;
                let gamma = super::christoffel(metric, &x)?;
                let mut dgamma = Vec::with_capacity(n.pow(4));
                for m in 0..n {
                    dgamma.extend(super::christoffel_derivative(metric, &x, &[m])?);
                }
                Ok((g, ginv, det.sqrt(), gamma, dgamma))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = MetricOnGrid {
            grid: grid.clone(),
            flat: metric.is_flat(),
            g: Vec::with_capacity(per.len()),
            ginv: Vec::with_capacity(per.len()),
            sqrt_det: Vec::with_capacity(per.len()),
            volume: Vec::with_capacity(per.len()),
            gamma: Vec::with_capacity(per.len()),
            dgamma: Vec::with_capacity(per.len()),
        };
        for (g, ginv, sd, gamma, dgamma) in per {
            out.g.push(g);
            out.ginv.push(ginv);
            out.sqrt_det.push(sd);
            out.volume.push(sd * cell);
            out.gamma.push(gamma);
            out.dgamma.push(dgamma);
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }
}

/// |T|_g = sqrt(T_{a…} T_{b…} g^{ab}…) for a rank-`rank` tensor at one point.
pub fn tensor_norm(t: &[f64], rank: usize, n: usize, ginv: &DMatrix<f64>) -> f64 {
    let mut raised = t.to_vec();
    for s in 0..rank {
        let stride = n.pow((rank - 1 - s) as u32);
        let mut next = vec![0.0; raised.len()];
        for (idx, out) in next.iter_mut().enumerate() {
            let a = (idx / stride) % n;
            let base = idx - a * stride;
            let mut v = 0.0;
            for b in 0..n {
                v += ginv[(a, b)] * raised[base + b * stride];
            }
            *out = v;
        }
        raised = next;
    }
    let q: f64 = raised.iter().zip(t).map(|(a, b)| a * b).sum();
    q.max(0.0).sqrt()
}

/// Pointwise |T|_g with the trailing `form_rank` indices counted once per
/// unordered set (division by √(p!)).
pub fn tensor_modulus(mg: &MetricOnGrid, tf: &TensorField, form_rank: usize) -> Vec<f64> {
    let n = mg.dim();
    let scale = factorial(form_rank).sqrt();
    (0..mg.grid.len())
        .map(|k| {
            let t: Vec<f64> = tf.data.iter().map(|c| c[k]).collect();
            tensor_norm(&t, tf.rank, n, &mg.ginv[k]) / scale
        })
        .collect()
}

/// One covariant derivative: (∇T)_{a B} = ∂_a T_B - Σ_s Γ^m_{a b_s} T_{B[s→m]}.
fn nabla_field(mg: &MetricOnGrid, t: &TensorField) -> TensorField {
    let n = mg.dim();
    let size = n.pow(t.rank as u32);
    let grid = &mg.grid;
    let mut data = Vec::with_capacity(n * size);
    for a in 0..n {
        for idx in 0..size {
            let mut comp = partial(grid, &t.data[idx], a);
            if !mg.flat {
                for s in 0..t.rank {
                    let stride = n.pow((t.rank - 1 - s) as u32);
                    let bs = (idx / stride) % n;
                    for m in 0..n {
                        let j = idx - bs * stride + m * stride;
                        for (k, c) in comp.iter_mut().enumerate() {
                            *c -= mg.gamma[k][(m * n + a) * n + bs] * t.data[j][k];
                        }
                    }
                }
            }
            data.push(comp);
        }
    }
    TensorField { rank: t.rank + 1, grid: grid.clone(), data }
}

/// ∇^k u as a rank k+p tensor field (derivative indices first).
pub fn covariant_derivative(mg: &MetricOnGrid, u: &FormField, k: usize) -> Result<TensorField> {
    if u.grid != mg.grid {
        return Err(Error::InvalidParameter("form and metric live on different grids".into()));
    }
    let mut t = u.to_tensor();
    for _ in 0..k {
        t = nabla_field(mg, &t);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::super::{flat_torus, sphere_chart};
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn component_ranking() {
        let combos = form_components(4, 2);
        for (r, c) in combos.iter().enumerate() {
            assert_eq!(sorted_component(4, c), Some((1.0, r)));
            let rev: Vec<usize> = c.iter().rev().cloned().collect();
            assert_eq!(sorted_component(4, &rev), Some((-1.0, r)));
        }
        assert_eq!(sorted_component(3, &[1, 1]), None);
        assert_eq!(sorted_component(3, &[]), Some((1.0, 0)));
    }

    #[test]
    fn flat_covariant_is_partial() {
        let m = flat_torus(2);
        let grid = m.domain().grid(16);
        let mg = MetricOnGrid::new(&m, &grid).unwrap();
        let u = FormField::from_fn(&grid, 1, |j, x| if j[0] == 0 { x[0].sin() } else { (x[0] + 2.0 * x[1]).cos() }).unwrap();
        let t = covariant_derivative(&mg, &u, 2).unwrap();
        let direct = partial(&grid, &partial(&grid, &u.comps[1], 1), 0);
        // index (a=0, b=1, K=1) → flat 0*4 + 1*2 + 1
        assert_eq!(t.data[3], direct);
    }

    #[test]
    fn gradient_modulus_flat() {
        let m = flat_torus(2);
        let grid = m.domain().grid(16);
        let mg = MetricOnGrid::new(&m, &grid).unwrap();
        let u = FormField::from_fn(&grid, 0, |_, x| x[0].sin() * x[1].cos()).unwrap();
        let t = covariant_derivative(&mg, &u, 1).unwrap();
        let md = tensor_modulus(&mg, &t, 0);
        let gx = partial(&grid, &u.comps[0], 0);
        let gy = partial(&grid, &u.comps[0], 1);
        for k in 0..grid.len() {
            assert!((md[k] - (gx[k] * gx[k] + gy[k] * gy[k]).sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn sphere_nabla_dphi_oracle() {
        // u = dφ: ∇_a u_b = -Γ^φ_{ab}, i.e. ∇_θ u_φ = ∇_φ u_θ = -cotθ, rest 0.
        let m = sphere_chart();
        let grid = m.domain().grid(24);
        let mg = MetricOnGrid::new(&m, &grid).unwrap();
        let u = FormField::from_fn(&grid, 1, |j, _| if j[0] == 1 { 1.0 } else { 0.0 }).unwrap();
        let t = covariant_derivative(&mg, &u, 1).unwrap();
        for k in 0..grid.len() {
            let x = grid.point(k);
            // Interior only: the zero extension pollutes the boundary differences.
            let idx = grid.multi_index(k);
            if idx.iter().any(|&i| i == 0 || i == grid.size - 1) {
                continue;
            }
            let cot = x[0].cos() / x[0].sin();
            assert!((t.data[1][k] + cot).abs() < 1e-12);
            assert!((t.data[2][k] + cot).abs() < 1e-12);
            assert!(t.data[0][k].abs() < 1e-12 && t.data[3][k].abs() < 1e-12);
        }
    }

    #[test]
    fn degree_too_large() {
        let grid = flat_torus(2).domain().grid(8);
        assert!(FormField::zeros(&grid, 3).is_err());
    }

    proptest! {
        #[test]
        fn antisymmetric_expansion(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0) {
            let grid = Grid::new(&[0.0; 3], &[1.0; 3], 2, crate::grid::Boundary::Periodic);
            let f = FormField::from_components(&grid, 2, vec![vec![a; 8], vec![b; 8], vec![c; 8]]).unwrap();
            let t = f.to_tensor();
            for i in 0..3 { for j in 0..3 {
                prop_assert_eq!(t.data[i * 3 + j][0], -t.data[j * 3 + i][0]);
            }}
        }
    }
}
