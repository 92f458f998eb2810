use crate::grid::{partial, partial2};
use crate::metric_charts::{form_components, sorted_component, unflatten, FormField};
use nalgebra::DMatrix;

/// Values, first and second partials of every ordered component of a form at one point.
/// Layout: `val[K]`, `d[a*size + K]`, `dd[(a*n + b)*size + K]`, K over n^p ordered tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct PointJet {
    pub val: Vec<f64>,
    pub d: Vec<f64>,
    pub dd: Vec<f64>,
}

impl PointJet {
    pub fn zeros(n: usize, p: usize) -> Self {
        let size = n.pow(p as u32);
        PointJet { val: vec![0.0; size], d: vec![0.0; n * size], dd: vec![0.0; n * n * size] }
    }
}

/// Second-order finite-difference jets of the stored components on the whole grid.
#[derive(Debug, Clone)]
pub struct GridJets {
    pub val: Vec<Vec<f64>>,
    pub d: Vec<Vec<Vec<f64>>>,
    /// Indexed by unordered pair (a ≤ b) in row-major pair order.
    pub dd: Vec<Vec<Vec<f64>>>,
}

pub(crate) fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|a| (a..n).map(move |b| (a, b))).collect()
}

impl GridJets {
    pub fn new(u: &FormField) -> Self {
        let grid = &u.grid;
        let n = grid.dim;
        let d = u.comps.iter().map(|c| (0..n).map(|a| partial(grid, c, a)).collect()).collect();
        let dd = u.comps.iter().map(|c| pairs(n).iter().map(|&(a, b)| partial2(grid, c, a, b)).collect()).collect();
        GridJets { val: u.comps.clone(), d, dd }
    }

    /// Expand the stored jets at grid point `k` to all ordered components.
    pub fn at(&self, n: usize, p: usize, k: usize) -> PointJet {
        let size = n.pow(p as u32);
        let pr = pairs(n);
        let mut jet = PointJet::zeros(n, p);
        for big_k in 0..size {
            let Some((s, c)) = sorted_component(n, &unflatten(big_k, n, p)) else { continue };
            jet.val[big_k] = s * self.val[c][k];
            for a in 0..n {
                jet.d[a * size + big_k] = s * self.d[c][a][k];
            }
            for (q, &(a, b)) in pr.iter().enumerate() {
                let v = s * self.dd[c][q][k];
                jet.dd[(a * n + b) * size + big_k] = v;
                jet.dd[(b * n + a) * size + big_k] = v;
            }
        }
        jet
    }
}

/// Nonnegative Hodge Laplacian of a p-form at one point from its jet, via
/// -∇^i∇_i α_K + Σ_ν (-1)^ν (∇_{k_ν}∇^i - ∇^i∇_{k_ν}) α_{i K̂_ν}.
/// `gamma[(i*n+k)*n+j]` = Γ^i_{kj}, `dgamma[((m*n+i)*n+k)*n+j]` = ∂_m Γ^i_{kj}.
/// Returns all n^p ordered components.
pub fn hodge_point(n: usize, p: usize, ginv: &DMatrix<f64>, gamma: &[f64], dgamma: &[f64], jet: &PointJet) -> Vec<f64> {
    let size = n.pow(p as u32);
    let gam = |i: usize, k: usize, j: usize| gamma[(i * n + k) * n + j];
    let dgam = |m: usize, i: usize, k: usize, j: usize| dgamma[((m * n + i) * n + k) * n + j];
    let strides: Vec<usize> = (0..p).map(|s| n.pow((p - 1 - s) as u32)).collect();
    let tuples: Vec<Vec<usize>> = (0..size).map(|k| unflatten(k, n, p)).collect();
    let replace = |big_k: usize, nu: usize, m: usize| big_k - tuples[big_k][nu] * strides[nu] + m * strides[nu];

    let mut nabla1 = vec![0.0; n * size];
    for b in 0..n {
        for big_k in 0..size {
            let mut v = jet.d[b * size + big_k];
            for nu in 0..p {
                let kn = tuples[big_k][nu];
                for m in 0..n {
                    v -= gam(m, b, kn) * jet.val[replace(big_k, nu, m)];
                }
            }
            nabla1[b * size + big_k] = v;
        }
    }
    let mut nabla2 = vec![0.0; n * n * size];
    for a in 0..n {
        for b in 0..n {
            for big_k in 0..size {
                let mut v = jet.dd[(a * n + b) * size + big_k];
                for nu in 0..p {
                    let kn = tuples[big_k][nu];
                    for m in 0..n {
                        let km = replace(big_k, nu, m);
                        v -= dgam(a, m, b, kn) * jet.val[km] + gam(m, b, kn) * jet.d[a * size + km];
                        v -= gam(m, a, kn) * nabla1[b * size + km];
                    }
                }
                for m in 0..n {
                    v -= gam(m, a, b) * nabla1[m * size + big_k];
                }
                nabla2[(a * n + b) * size + big_k] = v;
            }
        }
    }
    let mut out = vec![0.0; size];
    for (big_k, o) in out.iter_mut().enumerate() {
        let mut v = 0.0;
        for a in 0..n {
            for b in 0..n {
                v -= ginv[(a, b)] * nabla2[(a * n + b) * size + big_k];
            }
        }
        for nu in 0..p {
            let sign = if (nu + 1) % 2 == 0 { 1.0 } else { -1.0 };
            let kn = tuples[big_k][nu];
            let rest: Vec<usize> = tuples[big_k].iter().enumerate().filter(|&(s, _)| s != nu).map(|(_, &x)| x).collect();
            for i in 0..n {
                let mut idx = vec![i];
                idx.extend(&rest);
                let li = idx.iter().fold(0, |acc, &x| acc * n + x);
                for b in 0..n {
                    let c = nabla2[(kn * n + b) * size + li] - nabla2[(b * n + kn) * size + li];
                    v += sign * ginv[(i, b)] * c;
                }
            }
        }
        *o = v;
    }
    out
}

/// Coefficients of Δα_K = Σ_L [P^{ab}_{KL} ∂_ab α_L + Q^a_{KL} ∂_a α_L + S_{KL} α_L]
/// on stored components, with mixed second partials merged over a ≤ b.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCoeffs {
    pub comps: usize,
    /// [(K*C + L)*pairs + q]
    pub second: Vec<f64>,
    /// [(K*C + L)*n + a]
    pub first: Vec<f64>,
    /// [K*C + L]
    pub zeroth: Vec<f64>,
}

/// Probe `hodge_point` with unit jets to extract its coefficients.
pub fn hodge_coeffs(n: usize, p: usize, ginv: &DMatrix<f64>, gamma: &[f64], dgamma: &[f64]) -> PointCoeffs {
    let combos = form_components(n, p);
    let cc = combos.len();
    let size = n.pow(p as u32);
    let pr = pairs(n);
    let sorted_out: Vec<usize> = combos.iter().map(|j| j.iter().fold(0, |acc, &x| acc * n + x)).collect();
    let mut pc = PointCoeffs {
        comps: cc,
        second: vec![0.0; cc * cc * pr.len()],
        first: vec![0.0; cc * cc * n],
        zeroth: vec![0.0; cc * cc],
    };
    // Ordered expansion of the unit form e_L.
    let unit = |l: usize| -> Vec<f64> {
        (0..size)
            .map(|big_k| match sorted_component(n, &unflatten(big_k, n, p)) {
                Some((s, c)) if c == l => s,
                _ => 0.0,
            })
            .collect()
    };
    for l in 0..cc {
        let e = unit(l);
        let mut jet = PointJet::zeros(n, p);
        jet.val.copy_from_slice(&e);
        let out = hodge_point(n, p, ginv, gamma, dgamma, &jet);
        for (kk, &o) in sorted_out.iter().enumerate() {
            pc.zeroth[kk * cc + l] = out[o];
        }
        for a in 0..n {
            let mut jet = PointJet::zeros(n, p);
            jet.d[a * size..(a + 1) * size].copy_from_slice(&e);
            let out = hodge_point(n, p, ginv, gamma, dgamma, &jet);
            for (kk, &o) in sorted_out.iter().enumerate() {
                pc.first[(kk * cc + l) * n + a] = out[o];
            }
        }
        for (q, &(a, b)) in pr.iter().enumerate() {
            let mut jet = PointJet::zeros(n, p);
            jet.dd[(a * n + b) * size..(a * n + b + 1) * size].copy_from_slice(&e);
            jet.dd[(b * n + a) * size..(b * n + a + 1) * size].copy_from_slice(&e);
            let out = hodge_point(n, p, ginv, gamma, dgamma, &jet);
            for (kk, &o) in sorted_out.iter().enumerate() {
                pc.second[(kk * cc + l) * pr.len() + q] = out[o];
            }
        }
    }
    pc
}
