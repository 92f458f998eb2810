//! Vitali selection, the admissible covering with its overlap bound, weighted
//! norms and local-to-global assembly.

use crate::error::{Error, Result};
use crate::grid::lr_norm;
use crate::metric_charts::{GraphDistance, RadiusField};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub const DEFAULT_DIVISOR: f64 = 120.0;
pub const DEFAULT_DILATION: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
    /// Sample index of the center when the ball comes from a sample set.
    pub sample: Option<usize>,
}

/// Pairwise distances between ball centers that are at most some cutoff;
/// absent pairs are farther apart.
pub struct NeighborTable {
    rows: Vec<HashMap<usize, f64>>,
}

impl NeighborTable {
    /// All pairs by Euclidean distance.
    pub fn euclidean(balls: &[Ball]) -> Self {
        let rows = balls
            .iter()
            .map(|a| {
                balls
                    .iter()
                    .enumerate()
                    .map(|(j, b)| (j, a.center.iter().zip(&b.center).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()))
                    .collect()
            })
            .collect();
        NeighborTable { rows }
    }

    pub fn from_rows(rows: Vec<HashMap<usize, f64>>) -> Self {
        NeighborTable { rows }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        self.rows[i].get(&j).copied().unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covering {
    pub candidates: Vec<Ball>,
    /// Indices into `candidates`, in selection order.
    pub selected: Vec<usize>,
    pub dilation: f64,
    /// Divisor d in r(x) = R_ε(x)/d (absent for plain Vitali selections).
    pub divisor: Option<f64>,
    pub eps: Option<f64>,
    pub dim: usize,
    /// Dilated selected balls containing each sample point (empty if no sample set).
    pub overlap: Vec<usize>,
    /// Samples whose radius was degenerate and which were left out.
    pub excluded: Vec<usize>,
    pub disjoint: bool,
    pub covers: bool,
    /// ((1+ε)/(1-ε))^{n/2} d^n.
    pub bound_t: Option<f64>,
}

impl Covering {
    pub fn max_overlap(&self) -> usize {
        self.overlap.iter().copied().max().unwrap_or(0)
    }

    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.max_overlap() + 1];
        for &o in &self.overlap {
            h[o] += 1;
        }
        h
    }

    pub fn overlap_within_bound(&self) -> bool {
        self.bound_t.is_none_or(|t| self.max_overlap() as f64 <= t)
    }

    /// Plotting export: one entry per selected ball.
    pub fn export(&self, members: &[Vec<usize>]) -> Vec<CoverEntry> {
        self.selected
            .iter()
            .zip(members)
            .map(|(&i, m)| CoverEntry {
                center: self.candidates[i].center.clone(),
                r: self.candidates[i].radius,
                dilated_r: self.dilation * self.candidates[i].radius,
                overlap_count: m.iter().map(|&s| self.overlap[s]).max().unwrap_or(0),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverEntry {
    pub center: Vec<f64>,
    pub r: f64,
    #[serde(rename = "5r")]
    pub dilated_r: f64,
    pub overlap_count: usize,
}

/// ((1+ε)/(1-ε))^{n/2} d^n. The volume argument behind it needs the dilates
/// inside the slow-variation range, so small divisors void the bound.
pub fn overlap_bound(n: usize, eps: f64, divisor: f64) -> f64 {
    ((1.0 + eps) / (1.0 - eps)).powf(n as f64 / 2.0) * divisor.powi(n as i32)
}

/// Greedy selection by decreasing radius (ties by index), then brute-force
/// verification of disjointness and of B ⊂ dilation·C.
pub fn vitali_select_with(balls: &[Ball], dilation: f64, table: &NeighborTable, slack: f64) -> Result<Covering> {
    if let Some(b) = balls.iter().find(|b| !(b.radius > 0.0) || !b.radius.is_finite()) {
        return Err(Error::InvalidParameter(format!("ball radius must be positive, got {}", b.radius)));
    }
    let dim = balls.first().map_or(0, |b| b.center.len());
    let mut order: Vec<usize> = (0..balls.len()).collect();
    order.sort_by(|&a, &b| balls[b].radius.total_cmp(&balls[a].radius).then(a.cmp(&b)));
    let mut selected: Vec<usize> = Vec::new();
    for &i in &order {
        let free = selected.iter().all(|&s| table.get(i, s) >= balls[i].radius + balls[s].radius);
        if free {
            selected.push(i);
        }
    }
    let disjoint = selected.par_iter().enumerate().all(|(a, &i)| {
        selected[a + 1..].iter().all(|&j| table.get(i, j) >= balls[i].radius + balls[j].radius)
    });
    let covers = (0..balls.len()).into_par_iter().all(|i| {
        selected.iter().any(|&s| table.get(i, s) + balls[i].radius <= dilation * balls[s].radius + slack)
    });
    Ok(Covering {
        candidates: balls.to_vec(),
        selected,
        dilation,
        divisor: None,
        eps: None,
        dim,
        overlap: Vec::new(),
        excluded: Vec::new(),
        disjoint,
        covers,
        bound_t: None,
    })
}

/// Vitali selection with Euclidean center distances.
pub fn vitali_select(balls: &[Ball], dilation: f64) -> Result<Covering> {
    vitali_select_with(balls, dilation, &NeighborTable::euclidean(balls), 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverOpts {
    pub divisor: f64,
    pub dilation: f64,
    /// Added to the containment radius in the cover check (grid resolution).
    pub slack: f64,
}

impl Default for CoverOpts {
    fn default() -> Self {
        CoverOpts { divisor: DEFAULT_DIVISOR, dilation: DEFAULT_DILATION, slack: 0.0 }
    }
}

/// The admissible covering of a sample set, with per-ball sample membership of the dilates.
#[derive(Debug, Clone)]
pub struct AdmissibleCovering {
    pub covering: Covering,
    /// Sample indices inside each dilated selected ball (same order as `selected`).
    pub members: Vec<Vec<usize>>,
}

/// Candidate balls B(x, R_ε(x)/d) at every non-degenerate sample, Vitali
/// selection under the chart-graph distance, and overlap counts of the dilates.
pub fn build_admissible_covering(field: &RadiusField, dist: &GraphDistance, opts: CoverOpts) -> Result<AdmissibleCovering> {
    if !(opts.divisor > 0.0 && opts.dilation >= 1.0) {
        return Err(Error::InvalidParameter("divisor must be positive and dilation at least 1".into()));
    }
    let excluded: Vec<usize> = (0..field.samples.len()).filter(|&i| field.samples[i].degenerate).collect();
    let balls: Vec<Ball> = field
        .samples
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.degenerate)
        .map(|(i, s)| Ball { center: s.point.clone(), radius: s.r_eps / opts.divisor, sample: Some(i) })
        .collect();
    if balls.is_empty() {
        return Err(Error::Degenerate("every sample point has a degenerate admissible radius".into()));
    }
    let r_max = balls.iter().map(|b| b.radius).fold(0.0, f64::max);
    let cutoff = (opts.dilation + 1.0) * r_max + opts.slack;
    let index_of: HashMap<usize, usize> = balls.iter().enumerate().map(|(b, ball)| (ball.sample.unwrap(), b)).collect();
    let rows: Vec<HashMap<usize, f64>> = balls
        .par_iter()
        .map(|b| {
            dist.within(b.sample.unwrap(), cutoff)
                .into_iter()
                .filter_map(|(s, d)| index_of.get(&s).map(|&j| (j, d)))
                .collect()
        })
        .collect();
    let table = NeighborTable::from_rows(rows);
    let mut covering = vitali_select_with(&balls, opts.dilation, &table, opts.slack)?;
    let members: Vec<Vec<usize>> = covering
        .selected
        .par_iter()
        .map(|&i| {
            let b = &balls[i];
            dist.within(b.sample.unwrap(), opts.dilation * b.radius).into_iter().map(|(s, _)| s).collect()
        })
        .collect();
    let mut overlap = vec![0; field.samples.len()];
    for m in &members {
        for &s in m {
            overlap[s] += 1;
        }
    }
    let n = covering.dim;
    covering.overlap = overlap;
    covering.excluded = excluded;
    covering.divisor = Some(opts.divisor);
    covering.eps = Some(field.opts.eps);
    covering.bound_t = Some(overlap_bound(n, field.opts.eps, opts.divisor));
    Ok(AdmissibleCovering { covering, members })
}

/// Σ_j ∫_{5B_j} |f| dv and T‖f‖_{L¹}.
pub fn patch_sum_check(cov: &AdmissibleCovering, f: &[f64], volume: &[f64]) -> (f64, f64) {
    let patch: f64 = cov.members.iter().map(|m| m.iter().map(|&s| f[s].abs() * volume[s]).sum::<f64>()).sum();
    let total: f64 = f.iter().zip(volume).map(|(v, w)| v.abs() * w).sum();
    (patch, cov.covering.bound_t.unwrap_or(f64::INFINITY) * total)
}

/// w(x) = R_ε(x)^{γ_w} and its companion R_ε(x)^{γ_w - kr - rα}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightField {
    pub gamma_w: f64,
    pub values: Vec<f64>,
    pub companion: Vec<f64>,
}

impl WeightField {
    pub fn new(r_eps: &[f64], gamma_w: f64, k: usize, r: f64, alpha: u32) -> Result<Self> {
        if r_eps.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidParameter("admissible radii must be positive".into()));
        }
        let shift = gamma_w - (k as f64) * r - r * alpha as f64;
        Ok(WeightField {
            gamma_w,
            values: r_eps.iter().map(|v| v.powf(gamma_w)).collect(),
            companion: r_eps.iter().map(|v| v.powf(shift)).collect(),
        })
    }

    /// The weight that makes the companion trivial: γ_w = kr + rα.
    pub fn natural(r_eps: &[f64], k: usize, r: f64, alpha: u32) -> Result<Self> {
        Self::new(r_eps, (k as f64 + alpha as f64) * r, k, r, alpha)
    }
}

/// (∫ |f|^τ w dv)^{1/τ}; τ = ∞ gives the max of |f| with the weight ignored.
pub fn weighted_norm(f: &[f64], weight: &[f64], volume: &[f64], tau: f64) -> Result<f64> {
    if !(tau >= 1.0) {
        return Err(Error::InvalidParameter(format!("tau must be at least 1, got {tau}")));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("weighted_norm input"));
    }
    if tau.is_infinite() {
        return Ok(lr_norm(f, tau, volume));
    }
    let dv: Vec<f64> = weight.iter().zip(volume).map(|(w, v)| w * v).collect();
    Ok(lr_norm(f, tau, &dv))
}

/// Both sides of the patch-sum equivalence for weighted norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub gamma_w: f64,
    /// ‖f‖^τ_{L^τ(w)}.
    pub weighted: f64,
    /// Σ_x R(x)^{γ_w} ‖f‖^τ_{L^τ(5B_x)}.
    pub patch_sum: f64,
    pub lower_constant: f64,
    pub upper_constant: f64,
    pub lower_holds: bool,
    pub upper_holds: bool,
}

/// ‖f‖^τ_w ≤ 2^{γ_w} Σ and Σ ≤ 2^{γ_w} T ‖f‖^τ_w over the dilated covering balls.
pub fn norm_equivalence(cov: &AdmissibleCovering, r_eps: &[f64], f: &[f64], volume: &[f64], gamma_w: f64, tau: f64) -> Result<EquivalenceReport> {
    if !(tau >= 1.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau must be finite and at least 1, got {tau}")));
    }
    // Degenerate samples are outside the covered set on both sides.
    let mut w: Vec<f64> = r_eps.iter().map(|v| v.powf(gamma_w)).collect();
    for &i in &cov.covering.excluded {
        w[i] = 0.0;
    }
    let weighted = weighted_norm(f, &w, volume, tau)?.powf(tau);
    let patch_sum: f64 = cov
        .covering
        .selected
        .iter()
        .zip(&cov.members)
        .map(|(&i, m)| {
            let center = cov.covering.candidates[i].sample.expect("sample-based covering");
            r_eps[center].powf(gamma_w) * m.iter().map(|&s| f[s].abs().powf(tau) * volume[s]).sum::<f64>()
        })
        .sum();
    let lower_constant = 2f64.powf(gamma_w);
    let upper_constant = lower_constant * cov.covering.bound_t.unwrap_or(f64::INFINITY);
    let tol = 1e-12 * weighted.max(patch_sum);
    Ok(EquivalenceReport {
        gamma_w,
        weighted,
        patch_sum,
        lower_constant,
        upper_constant,
        lower_holds: weighted <= lower_constant * patch_sum + tol,
        upper_holds: patch_sum <= upper_constant * weighted + tol,
    })
}

/// One ball's local estimate: lhs = ‖∇^k u‖_{L^r(B)} against
/// constant·time_factor·R^{-(k+α)}·‖ω‖_{L^r(B)}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalEstimate {
    pub center: Vec<f64>,
    pub radius: f64,
    pub k: usize,
    pub r: f64,
    pub alpha: u32,
    pub lhs: f64,
    pub omega_norm: f64,
    pub time_factor: f64,
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalBound {
    pub gamma_w: f64,
    /// (Σ R^{γ_w} lhs^r)^{1/r}.
    pub weighted_lhs: f64,
    /// (Σ R^{γ_w} (c·tf·R^{-(k+α)}·‖ω‖)^r)^{1/r}.
    pub rhs: f64,
    pub holds: bool,
}

/// Weighted sum of local estimates. With γ_w = kr + rα the radius powers cancel
/// and the right side is the unweighted c·tf·(Σ‖ω‖^r_{L^r(B)})^{1/r}.
pub fn globalize(local: &[LocalEstimate], gamma_w: f64) -> Result<GlobalBound> {
    let Some(first) = local.first() else {
        return Err(Error::InvalidParameter("no local estimates to assemble".into()));
    };
    if local.iter().any(|l| l.k != first.k || l.r != first.r || l.alpha != first.alpha) {
        return Err(Error::InvalidParameter("local estimates disagree on (k, r, alpha)".into()));
    }
    let (k, r, alpha) = (first.k as f64, first.r, first.alpha as f64);
    let (lhs, rhs) = if r.is_infinite() {
        (
            local.iter().map(|l| l.lhs).fold(0.0, f64::max),
            local.iter().map(|l| l.constant * l.time_factor * l.radius.powf(-(k + alpha)) * l.omega_norm).fold(0.0, f64::max),
        )
    } else {
        let lhs: f64 = local.iter().map(|l| l.radius.powf(gamma_w) * l.lhs.powf(r)).sum();
        let rhs: f64 = local
            .iter()
            .map(|l| l.radius.powf(gamma_w) * (l.constant * l.time_factor * l.radius.powf(-(k + alpha)) * l.omega_norm).powf(r))
            .sum();
        (lhs.powf(1.0 / r), rhs.powf(1.0 / r))
    };
    Ok(GlobalBound { gamma_w, weighted_lhs: lhs, rhs, holds: lhs <= rhs * (1.0 + 1e-12) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric_charts::{flat_torus, perturbed_euclidean, radius_field, ChartMetric, RadiusOpts};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn ball(c: &[f64], r: f64) -> Ball {
        Ball { center: c.to_vec(), radius: r, sample: None }
    }

    #[test]
    fn single_and_pair() {
        let c = vitali_select(&[ball(&[0.0, 0.0], 1.0)], 5.0).unwrap();
        assert_eq!(c.selected, vec![0]);
        assert!(c.covers && c.disjoint);
        let c = vitali_select(&[ball(&[0.0, 0.0], 1.0), ball(&[1.0, 0.0], 1.0)], 5.0).unwrap();
        assert_eq!(c.selected.len(), 1);
        assert!(c.covers && c.disjoint);
        assert!(vitali_select(&[], 5.0).unwrap().selected.is_empty());
    }

    #[test]
    fn random_unit_square() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let balls: Vec<Ball> =
            (0..200).map(|_| ball(&[rng.gen::<f64>(), rng.gen::<f64>()], rng.gen_range(0.01..0.1))).collect();
        let c = vitali_select(&balls, 5.0).unwrap();
        assert!(c.disjoint && c.covers);
        // Independent brute-force check.
        let d = |a: &Ball, b: &Ball| ((a.center[0] - b.center[0]).powi(2) + (a.center[1] - b.center[1]).powi(2)).sqrt();
        for (x, &i) in c.selected.iter().enumerate() {
            for &j in &c.selected[x + 1..] {
                assert!(d(&balls[i], &balls[j]) >= balls[i].radius + balls[j].radius);
            }
        }
        for b in &balls {
            assert!(c.selected.iter().any(|&s| d(b, &balls[s]) + b.radius <= 5.0 * balls[s].radius));
        }
    }

    #[test]
    fn overlap_bound_value() {
        let t = overlap_bound(2, 0.1, 120.0);
        assert!((t - 11.0 / 9.0 * 14400.0).abs() < 1e-9);
    }

    #[test]
    fn flat_uniform_covering() {
        let m = flat_torus(2);
        let grid = m.domain().grid(12);
        let field = radius_field(&m, &grid, RadiusOpts::new(1, 0.1)).unwrap();
        let dist = GraphDistance::new(&m, &grid);
        let cov = build_admissible_covering(&field, &dist, CoverOpts::default()).unwrap();
        assert!(cov.covering.candidates.iter().all(|b| (b.radius - 1.0 / 120.0).abs() < 1e-15));
        assert!(cov.covering.disjoint && cov.covering.covers);
        assert!(cov.covering.overlap.iter().all(|&o| o >= 1));
        assert!(cov.covering.overlap_within_bound());
        let f: Vec<f64> = grid.points().iter().map(|x| 1.0 + x[0].cos()).collect();
        let vol = vec![grid.cell_volume(); grid.len()];
        let (patch, bound) = patch_sum_check(&cov, &f, &vol);
        assert!(patch <= bound);
    }

    #[test]
    fn coarse_divisor_overlaps_and_equivalence() {
        let m = perturbed_euclidean(0.03, 1.0);
        let grid = m.domain().grid(32);
        let field = radius_field(&m, &grid, RadiusOpts::new(1, 0.05)).unwrap();
        let dist = GraphDistance::new(&m, &grid);
        let opts = CoverOpts { divisor: 8.0, dilation: 5.0, slack: grid.h_max() };
        let cov = build_admissible_covering(&field, &dist, opts).unwrap();
        assert!(cov.covering.disjoint && cov.covering.covers);
        assert!(cov.covering.max_overlap() > 1);
        assert!(cov.covering.overlap.iter().all(|&o| o >= 1));
        assert!(cov.covering.overlap_within_bound());
        let f: Vec<f64> = grid.points().iter().map(|x| (x[0] - 0.3).sin() + 0.1).collect();
        let vol = vec![grid.cell_volume(); grid.len()];
        let rep = norm_equivalence(&cov, &field.r_eps(), &f, &vol, 3.0, 2.0).unwrap();
        assert!(rep.lower_holds && rep.upper_holds, "{rep:?}");
    }

    #[test]
    fn weighted_norm_examples() {
        let grid = flat_torus(2).domain().grid(8);
        // Unit-volume torus: rescale the cell volume.
        let vol = vec![1.0 / grid.len() as f64; grid.len()];
        let one = vec![1.0; grid.len()];
        assert!((weighted_norm(&one, &one, &vol, 2.0).unwrap() - 1.0).abs() < 1e-14);
        let f: Vec<f64> = (0..grid.len()).map(|i| i as f64 - 20.0).collect();
        assert_eq!(weighted_norm(&f, &one, &vol, 3.0).unwrap(), lr_norm(&f, 3.0, &vol));
        assert_eq!(weighted_norm(&f, &vec![0.5; grid.len()], &vol, f64::INFINITY).unwrap(), 43.0);
    }

    #[test]
    fn natural_weight_cancels_companion() {
        let r = [0.2, 0.5, 1.0];
        let w = WeightField::natural(&r, 1, 2.0, 2).unwrap();
        assert!(w.companion.iter().all(|&c| c == 1.0));
        assert!((w.values[0] - 0.2f64.powi(6)).abs() < 1e-15);
    }

    #[test]
    fn globalize_single_ball_and_flat() {
        let l = LocalEstimate { center: vec![0.0], radius: 0.5, k: 1, r: 2.0, alpha: 1, lhs: 1.0, omega_norm: 1.0, time_factor: 1.0, constant: 1.0 };
        let g = globalize(&[l.clone()], 4.0).unwrap();
        assert!((g.weighted_lhs - 0.5f64.powf(2.0)).abs() < 1e-15);
        // R^{γ/r}·R^{-(k+α)} = 1 for the natural weight.
        assert!((g.rhs - 1.0).abs() < 1e-15);
        let mut other = l.clone();
        other.k = 2;
        assert!(globalize(&[l, other], 4.0).is_err());
    }

    proptest! {
        #[test]
        fn selection_is_valid(seed in 0u64..1000, count in 1usize..60) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let balls: Vec<Ball> = (0..count)
                .map(|_| ball(&[rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()], rng.gen_range(0.01..0.3)))
                .collect();
            let c = vitali_select(&balls, 5.0).unwrap();
            prop_assert!(c.disjoint && c.covers);
        }
    }

    #[test]
    fn dim_is_recorded() {
        let m = flat_torus(3);
        let grid = m.domain().grid(4);
        let field = radius_field(&m, &grid, RadiusOpts::new(1, 0.1)).unwrap();
        let cov = build_admissible_covering(&field, &GraphDistance::new(&m, &grid), CoverOpts::default()).unwrap();
        assert_eq!(cov.covering.dim, m.dim());
    }
}
