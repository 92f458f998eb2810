//! Tensor-product grids on chart boxes and scalar grid functions.

use serde::{Deserialize, Serialize};

/// How a grid function continues past the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Periodic,
    ZeroExtension,
}

/// Uniform tensor grid. Periodic grids sample `lo + i*h` on [lo, hi);
/// zero-extension grids sample the interior points of [lo, hi] so that the
/// box faces carry the implicit zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub size: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub h: Vec<f64>,
    pub boundary: Boundary,
}

impl Grid {
    pub fn new(lo: &[f64], hi: &[f64], size: usize, boundary: Boundary) -> Self {
        assert_eq!(lo.len(), hi.len());
        assert!(size >= 2);
        let h = lo
            .iter()
            .zip(hi)
            .map(|(a, b)| match boundary {
                Boundary::Periodic => (b - a) / size as f64,
                Boundary::ZeroExtension => (b - a) / (size + 1) as f64,
            })
            .collect();
        Grid { dim: lo.len(), size, lo: lo.to_vec(), hi: hi.to_vec(), h, boundary }
    }

    pub fn len(&self) -> usize {
        self.size.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h_max(&self) -> f64 {
        self.h.iter().cloned().fold(0.0, f64::max)
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.size.pow((self.dim - 1 - axis) as u32)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        for a in (0..self.dim).rev() {
            idx[a] = flat % self.size;
            flat /= self.size;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.size + i)
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        match self.boundary {
            Boundary::Periodic => self.lo[axis] + i as f64 * self.h[axis],
            Boundary::ZeroExtension => self.lo[axis] + (i + 1) as f64 * self.h[axis],
        }
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.coord(a, i))
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    pub fn period(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    /// Neighbour of `flat` shifted by `offset` along `axis`; `None` when the
    /// shift leaves a zero-extension box.
    pub fn shift(&self, flat: usize, axis: usize, offset: isize) -> Option<usize> {
        let stride = self.stride(axis);
        let i = (flat / stride) % self.size;
        let n = self.size as isize;
        let j = i as isize + offset;
        let j = match self.boundary {
            Boundary::Periodic => j.rem_euclid(n),
            Boundary::ZeroExtension => {
                if j < 0 || j >= n {
                    return None;
                }
                j
            }
        };
        Some(flat - i * stride + j as usize * stride)
    }

    /// Coordinate displacement `y - x` honouring periodic wrap.
    pub fn displacement(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|a| {
                let d = y[a] - x[a];
                match self.boundary {
                    Boundary::Periodic => {
                        let l = self.period(a);
                        d - l * (d / l).round()
                    }
                    Boundary::ZeroExtension => d,
                }
            })
            .collect()
    }

    /// Distance from `x` to the box faces (infinite for periodic grids).
    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        match self.boundary {
            Boundary::Periodic => f64::INFINITY,
            Boundary::ZeroExtension => (0..self.dim)
                .map(|a| (x[a] - self.lo[a]).min(self.hi[a] - x[a]))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Wrap a point into the fundamental box (periodic axes only).
    pub fn wrap(&self, x: &mut [f64]) {
        if self.boundary == Boundary::Periodic {
            for a in 0..self.dim {
                let l = self.period(a);
                x[a] = self.lo[a] + (x[a] - self.lo[a]).rem_euclid(l);
            }
        }
    }

    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.len()).map(|k| f(&self.point(k))).collect()
    }
}

/// Second-order central difference along `axis`.
pub fn partial(grid: &Grid, f: &[f64], axis: usize) -> Vec<f64> {
    let inv = 0.5 / grid.h[axis];
    (0..grid.len())
        .map(|k| {
            let fp = grid.shift(k, axis, 1).map_or(0.0, |j| f[j]);
            let fm = grid.shift(k, axis, -1).map_or(0.0, |j| f[j]);
            (fp - fm) * inv
        })
        .collect()
}

/// Second-order central second difference ∂_a∂_b.
pub fn partial2(grid: &Grid, f: &[f64], a: usize, b: usize) -> Vec<f64> {
    if a != b {
        return partial(grid, &partial(grid, f, b), a);
    }
    let inv = 1.0 / (grid.h[a] * grid.h[a]);
    (0..grid.len())
        .map(|k| {
            let fp = grid.shift(k, a, 1).map_or(0.0, |j| f[j]);
            let fm = grid.shift(k, a, -1).map_or(0.0, |j| f[j]);
            (fp - 2.0 * f[k] + fm) * inv
        })
        .collect()
}

/// Quadrature L^r norm of nodal values with per-node volume weights; r = ∞
/// is the maximum modulus.
pub fn lr_norm(values: &[f64], r: f64, dv: &[f64]) -> f64 {
    if r.is_infinite() {
        return values.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    let s: f64 = values.iter().zip(dv).map(|(v, w)| v.abs().powf(r) * w).sum();
    s.powf(1.0 / r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn index_round_trip() {
        let g = Grid::new(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0], 5, Boundary::Periodic);
        for k in 0..g.len() {
            assert_eq!(g.flat_index(&g.multi_index(k)), k);
        }
    }

    #[test]
    fn periodic_derivative_second_order() {
        let mut errs = vec![];
        for &n in &[16usize, 32] {
            let g = Grid::new(&[-PI, -PI], &[PI, PI], n, Boundary::Periodic);
            let f = g.sample(|x| x[0].sin() * x[1].cos());
            let d = partial(&g, &f, 0);
            let exact = g.sample(|x| x[0].cos() * x[1].cos());
            errs.push(d.iter().zip(&exact).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())));
        }
        let order = (errs[0] / errs[1]).log2();
        assert!((order - 2.0).abs() < 0.1, "order {order}");
    }

    #[test]
    fn zero_extension_shift_stops_at_faces() {
        let g = Grid::new(&[0.0], &[1.0], 4, Boundary::ZeroExtension);
        assert_eq!(g.shift(0, 0, -1), None);
        assert_eq!(g.shift(3, 0, 1), None);
        assert!((g.coord(0, 0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn constant_norm_on_unit_torus() {
        let g = Grid::new(&[0.0, 0.0], &[1.0, 1.0], 8, Boundary::Periodic);
        let f = vec![1.0; g.len()];
        let dv = vec![g.cell_volume(); g.len()];
        assert!((lr_norm(&f, 2.0, &dv) - 1.0).abs() < 1e-14);
    }
}
