use super::ChartMetric;
use crate::grid::Grid;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Shortest paths on the grid graph (all 3ⁿ-1 neighbour offsets) with edge
/// lengths sqrt(dᵀ g(midpoint) d).
pub struct GraphDistance {
    adjacency: Vec<Vec<(usize, f64)>>,
}

#[derive(PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}

impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl GraphDistance {
    pub fn new(metric: &dyn ChartMetric, grid: &Grid) -> Self {
        let n = grid.dim;
        let offsets: Vec<Vec<isize>> = (0..3usize.pow(n as u32))
            .map(|k| {
                let mut rem = k;
                (0..n)
                    .map(|_| {
                        let v = (rem % 3) as isize - 1;
                        rem /= 3;
                        v
                    })
                    .collect()
            })
            .filter(|o: &Vec<isize>| o.iter().any(|&v| v != 0))
            .collect();
        let adjacency = (0..grid.len())
            .map(|k| {
                let x = grid.point(k);
                let mut out = Vec::with_capacity(offsets.len());
                'off: for o in &offsets {
                    let mut j = k;
                    for (a, &v) in o.iter().enumerate() {
                        if v != 0 {
                            match grid.shift(j, a, v) {
                                Some(jj) => j = jj,
                                None => continue 'off,
                            }
                        }
                    }
                    let d: Vec<f64> = (0..n).map(|a| o[a] as f64 * grid.h[a]).collect();
                    let mid: Vec<f64> = (0..n).map(|a| x[a] + 0.5 * d[a]).collect();
                    let g = metric.g(&mid);
                    let mut q = 0.0;
                    for a in 0..n {
                        for b in 0..n {
                            q += d[a] * g[(a, b)] * d[b];
                        }
                    }
                    out.push((j, q.sqrt()));
                }
                out
            })
            .collect();
        GraphDistance { adjacency }
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    /// Nodes within `radius` of `source` with their distances, in node order.
    pub fn within(&self, source: usize, radius: f64) -> Vec<(usize, f64)> {
        let mut dist: std::collections::HashMap<usize, f64> = std::collections::HashMap::new();
        let mut heap = BinaryHeap::new();
        dist.insert(source, 0.0);
        heap.push(Item(0.0, source));
        while let Some(Item(d, u)) = heap.pop() {
            if d > dist[&u] {
                continue;
            }
            for &(v, w) in &self.adjacency[u] {
                let nd = d + w;
                if nd > radius {
                    continue;
                }
                if dist.get(&v).is_none_or(|&old| nd < old) {
                    dist.insert(v, nd);
                    heap.push(Item(nd, v));
                }
            }
        }
        let mut out: Vec<(usize, f64)> = dist.into_iter().collect();
        out.sort_unstable_by_key(|p| p.0);
        out
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.within(a, f64::INFINITY).into_iter().find(|p| p.0 == b).map_or(f64::INFINITY, |p| p.1)
    }
}

#[cfg(test)]
mod tests {
    use super::super::flat_torus;
    use super::*;

    #[test]
    fn flat_axis_and_diagonal_steps() {
        let m = flat_torus(2);
        let g = m.domain().grid(16);
        let d = GraphDistance::new(&m, &g);
        let h = g.h[0];
        assert!((d.distance(0, 1) - h).abs() < 1e-14);
        assert!((d.distance(0, 17) - h * 2f64.sqrt()).abs() < 1e-14);
        // Periodic wrap: index 15 is one step from 0.
        assert!((d.distance(0, 15) - h).abs() < 1e-14);
    }
}
