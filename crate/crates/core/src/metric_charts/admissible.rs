use super::{ChartMetric, GraphDistance};
use crate::error::{Error, Result};
use crate::grid::Grid;
use nalgebra::SymmetricEigen;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Absolute tolerance of the radius bisection.
pub const BISECTION_TOL: f64 = 1e-4;
/// Radii are searched on (0, R_CAP]; R' ≥ 2 already saturates R_ε = 1.
pub const R_CAP: f64 = 2.0;

/// A chart ball B(center, radius) certified (or to be certified) at order m, tolerance ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleBall {
    pub center: Vec<f64>,
    pub radius: f64,
    pub m: usize,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    /// min over samples of distance from the spectrum of g to the edges of [1-ε, 1+ε].
    pub margin_eigen: f64,
    /// ε minus the weighted derivative sum (ε when m = 0).
    pub margin_derivative: f64,
    pub min_eig: f64,
    pub max_eig: f64,
    pub derivative_sum: f64,
}

/// Non-decreasing direction tuples β with 1 ≤ |β| ≤ m.
pub fn derivative_multi_indices(n: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut frontier: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..m {
        let mut next = Vec::new();
        for k in &frontier {
            let last = k.last().copied().unwrap_or(0);
            for d in last..n {
                let mut kk = k.clone();
                kk.push(d);
                next.push(kk);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Sample offsets in the closed unit ball: a lattice plus points on the sphere.
pub fn ball_template(n: usize) -> Vec<Vec<f64>> {
    let s: i64 = if n <= 2 { 6 } else { 3 };
    let mut pts = Vec::new();
    let count = (2 * s + 1).pow(n as u32);
    for flat in 0..count {
        let mut rem = flat;
        let mut p = vec![0.0; n];
        for a in 0..n {
            p[a] = ((rem % (2 * s + 1)) - s) as f64 / s as f64;
            rem /= 2 * s + 1;
        }
        let r2: f64 = p.iter().map(|v| v * v).sum();
        if r2 <= 1.0 + 1e-12 {
            pts.push(p.clone());
        }
        if r2 > 0.0 {
            let r = r2.sqrt();
            let on_shell = p.iter().any(|v| v.abs() == 1.0);
            if on_shell {
                pts.push(p.iter().map(|v| v / r).collect());
            }
        }
    }
    pts
}

fn eig_extremes(g: &nalgebra::DMatrix<f64>) -> (f64, f64) {
    if g.nrows() == 2 {
        let (a, b, d) = (g[(0, 0)], g[(0, 1)], g[(1, 1)]);
        let mid = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        return (mid - rad, mid + rad);
    }
    let e = SymmetricEigen::new(g.clone());
    let lo = e.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = e.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

fn validate_ball(metric: &dyn ChartMetric, x: &[f64], radius: f64, m: usize, eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps {eps} outside (0, 1)")));
    }
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidParameter(format!("radius {radius} must be positive")));
    }
    if x.len() != metric.dim() {
        return Err(Error::DimensionMismatch { expected: metric.dim(), got: x.len() });
    }
    if m > metric.max_order() {
        return Err(Error::InsufficientOrder { requested: metric.max_order(), required: m });
    }
    if metric.domain().distance_to_boundary(x) < radius - 1e-12 {
        return Err(Error::BallOutsideChart { center: x.to_vec(), radius });
    }
    Ok(())
}

fn evaluate(
    metric: &dyn ChartMetric,
    x: &[f64],
    radius: f64,
    m: usize,
    eps: f64,
    template: &[Vec<f64>],
    betas: &[Vec<usize>],
    early_exit: bool,
) -> Result<AdmissibilityReport> {
    let n = metric.dim();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut sups = vec![0.0f64; betas.len()];
    let mut y = vec![0.0; n];
    for o in template {
        for a in 0..n {
            y[a] = x[a] + radius * o[a];
        }
        let g = metric.g(&y);
        let (l, h) = eig_extremes(&g);
        lo = lo.min(l);
        hi = hi.max(h);
        if early_exit && (lo < 1.0 - eps || hi > 1.0 + eps) {
            return Ok(AdmissibilityReport {
                admissible: false,
                margin_eigen: (lo - (1.0 - eps)).min(1.0 + eps - hi),
                margin_derivative: f64::NAN,
                min_eig: lo,
                max_eig: hi,
                derivative_sum: f64::NAN,
            });
        }
        if m >= 1 && !metric.is_flat() {
            for (s, beta) in sups.iter_mut().zip(betas) {
                let d = metric.dg(&y, beta)?;
                *s = s.max(d.abs().max());
            }
        }
    }
    let derivative_sum: f64 = betas.iter().zip(&sups).map(|(b, s)| radius.powi(b.len() as i32) * s).sum();
    let margin_eigen = (lo - (1.0 - eps)).min(1.0 + eps - hi);
    let margin_derivative = if m >= 1 { eps - derivative_sum } else { eps };
    Ok(AdmissibilityReport {
        admissible: margin_eigen >= 0.0 && margin_derivative >= 0.0,
        margin_eigen,
        margin_derivative,
        min_eig: lo,
        max_eig: hi,
        derivative_sum,
    })
}

/// Check conditions (1) and (2) on B(x, R): the spectrum of g lies in
/// [1-ε, 1+ε] at every sample, and for m ≥ 1
/// Σ_{1≤|β|≤m} R^{|β|} sup_B max_ij |∂^β g_ij| ≤ ε.
pub fn is_admissible(metric: &dyn ChartMetric, x: &[f64], radius: f64, m: usize, eps: f64) -> Result<AdmissibilityReport> {
    validate_ball(metric, x, radius, m, eps)?;
    let template = ball_template(metric.dim());
    let betas = derivative_multi_indices(metric.dim(), m);
    evaluate(metric, x, radius, m, eps, &template, &betas, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusOpts {
    pub m: usize,
    pub eps: f64,
    pub tol: f64,
    pub cap: f64,
}

impl RadiusOpts {
    pub fn new(m: usize, eps: f64) -> Self {
        RadiusOpts { m, eps, tol: BISECTION_TOL, cap: R_CAP }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusSample {
    pub point: Vec<f64>,
    /// Supremal admissible radius, searched on (0, min(cap, distance to boundary)].
    pub r_prime: f64,
    /// min(1, R'/2).
    pub r_eps: f64,
    /// No admissible radius above the tolerance; `r_prime` is the tolerance.
    pub degenerate: bool,
    /// The search ceiling was itself admissible.
    pub capped: bool,
}

/// R_ε(x) by bisection on R against [`is_admissible`].
pub fn admissible_radius(metric: &dyn ChartMetric, x: &[f64], opts: RadiusOpts) -> Result<RadiusSample> {
    let template = ball_template(metric.dim());
    let betas = derivative_multi_indices(metric.dim(), opts.m);
    radius_with(metric, x, opts, &template, &betas)
}

fn radius_with(
    metric: &dyn ChartMetric,
    x: &[f64],
    opts: RadiusOpts,
    template: &[Vec<f64>],
    betas: &[Vec<usize>],
) -> Result<RadiusSample> {
    let upper = opts.cap.min(metric.domain().distance_to_boundary(x));
    let ok = |r: f64| -> Result<bool> {
        if r <= 0.0 {
            return Ok(true);
        }
        validate_ball(metric, x, r, opts.m, opts.eps)?;
        Ok(evaluate(metric, x, r, opts.m, opts.eps, template, betas, true)?.admissible)
    };
    let finish = |rp: f64, degenerate: bool, capped: bool| RadiusSample {
        point: x.to_vec(),
        r_prime: rp,
        r_eps: (rp / 2.0).min(1.0),
        degenerate,
        capped,
    };
    if upper <= opts.tol {
        return Ok(finish(opts.tol, true, false));
    }
    if ok(upper)? {
        return Ok(finish(upper, false, upper >= opts.cap));
    }
    let (mut lo, mut hi) = (0.0, upper);
    while hi - lo > opts.tol {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo < opts.tol {
        return Ok(finish(opts.tol, true, false));
    }
    Ok(finish(lo, false, false))
}

/// Radius samples at every grid point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadiusField {
    pub opts: RadiusOpts,
    pub samples: Vec<RadiusSample>,
}

impl RadiusField {
    pub fn r_eps(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.r_eps).collect()
    }
    pub fn r_prime(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.r_prime).collect()
    }
    pub fn degenerate_count(&self) -> usize {
        self.samples.iter().filter(|s| s.degenerate).count()
    }
    /// Minimum of R_ε over non-degenerate samples.
    pub fn eta(&self) -> f64 {
        self.samples.iter().filter(|s| !s.degenerate).map(|s| s.r_eps).fold(f64::INFINITY, f64::min)
    }
}

/// R_ε at every grid point, in parallel, output in grid order.
pub fn radius_field(metric: &dyn ChartMetric, grid: &Grid, opts: RadiusOpts) -> Result<RadiusField> {
    let template = ball_template(metric.dim());
    let betas = derivative_multi_indices(metric.dim(), opts.m);
    let samples = (0..grid.len())
        .into_par_iter()
        .map(|k| radius_with(metric, &grid.point(k), opts, &template, &betas))
        .collect::<Result<Vec<_>>>()?;
    Ok(RadiusField { opts, samples })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationReport {
    pub pairs_checked: usize,
    pub violations: usize,
    /// Largest amount by which a pair exceeded its allowance (≤ 0 when passing).
    pub worst_excess: f64,
    pub slack: f64,
    pub pass: bool,
}

/// |R'(x) - R'(y)| ≤ d_g(x, y) + slack over all sample pairs. Pairs farther
/// apart than the search ceiling pass trivially since R' ≤ cap.
pub fn check_lipschitz(field: &RadiusField, dist: &GraphDistance, slack: f64) -> VariationReport {
    let rp = field.r_prime();
    let cutoff = field.opts.cap + slack;
    let per: Vec<(usize, f64)> = (0..rp.len())
        .into_par_iter()
        .map(|x| {
            let mut bad = 0;
            let mut worst = f64::NEG_INFINITY;
            for (y, d) in dist.within(x, cutoff) {
                if y == x {
                    continue;
                }
                let excess = (rp[x] - rp[y]).abs() - d - slack;
                worst = worst.max(excess);
                if excess > 0.0 {
                    bad += 1;
                }
            }
            (bad, worst)
        })
        .collect();
    summarize(&per, rp.len() * rp.len().saturating_sub(1), slack)
}

/// For y with d_g(x, y) < R_ε(x): R_ε(x)/2 - slack ≤ R_ε(y) ≤ 2 R_ε(x) + slack.
pub fn check_slow_variation(field: &RadiusField, dist: &GraphDistance, slack: f64) -> VariationReport {
    let re = field.r_eps();
    let per: Vec<(usize, f64, usize)> = (0..re.len())
        .into_par_iter()
        .map(|x| {
            let mut bad = 0;
            let mut count = 0;
            let mut worst = f64::NEG_INFINITY;
            for (y, d) in dist.within(x, re[x]) {
                if y == x || d >= re[x] {
                    continue;
                }
                count += 1;
                let excess = (re[x] / 2.0 - slack - re[y]).max(re[y] - 2.0 * re[x] - slack);
                worst = worst.max(excess);
                if excess > 0.0 {
                    bad += 1;
                }
            }
            (bad, worst, count)
        })
        .collect();
    let pairs = per.iter().map(|p| p.2).sum();
    let flat: Vec<(usize, f64)> = per.iter().map(|p| (p.0, p.1)).collect();
    summarize(&flat, pairs, slack)
}

fn summarize(per: &[(usize, f64)], pairs: usize, slack: f64) -> VariationReport {
    let violations: usize = per.iter().map(|p| p.0).sum();
    let worst = per.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    VariationReport {
        pairs_checked: pairs,
        violations,
        worst_excess: if worst.is_finite() { worst } else { 0.0 },
        slack,
        pass: violations == 0,
    }
}

#[cfg(test)]
mod tests {
    use super::super::{flat_torus, perturbed_euclidean, sphere_chart, Domain, ExprMetric};
    use super::*;
    use proptest::prelude::*;

    fn big_flat_box() -> ExprMetric {
        let d = Domain { lo: vec![-10.0, -10.0], hi: vec![10.0, 10.0], periodic: false };
        ExprMetric::from_strs(d, &[&["1", "0"], &["0", "1"]]).unwrap()
    }

    #[test]
    fn multi_index_counts() {
        assert_eq!(derivative_multi_indices(2, 1).len(), 2);
        assert_eq!(derivative_multi_indices(2, 2).len(), 5);
        assert_eq!(derivative_multi_indices(3, 2).len(), 9);
    }

    #[test]
    fn flat_margins() {
        let m = big_flat_box();
        let r = is_admissible(&m, &[0.0, 0.0], 1.5, 2, 0.1).unwrap();
        assert!(r.admissible);
        assert!((r.margin_eigen - 0.1).abs() < 1e-15 && (r.margin_derivative - 0.1).abs() < 1e-15);
    }

    #[test]
    fn ball_outside_chart_is_an_error() {
        let m = sphere_chart();
        let x = [std::f64::consts::FRAC_PI_2, 0.0];
        assert!(matches!(is_admissible(&m, &x, 0.7, 1, 0.1), Err(Error::BallOutsideChart { .. })));
    }

    #[test]
    fn linear_conformal_factor_condition_two() {
        // g = (1 + c x1) δ, c = 0.5: ∂_1 g_11 = c, so condition (2) at m = 1
        // reads R c ≤ ε; condition (1) needs c R ≤ ε as well.
        let d = Domain { lo: vec![-1.5, -1.5], hi: vec![1.5, 1.5], periodic: false };
        let m = ExprMetric::from_strs(d, &[&["1 + 0.5*x1", "0"], &["0", "1 + 0.5*x1"]]).unwrap();
        let eps = 0.1;
        let oracle = |r: f64| r * 0.5;
        for r in [0.05, 0.15, 0.19, 0.21, 0.3] {
            let rep = is_admissible(&m, &[0.0, 0.0], r, 1, eps).unwrap();
            assert!((rep.derivative_sum - oracle(r)).abs() < 1e-14);
            assert_eq!(rep.admissible, oracle(r) <= eps, "r = {r}");
        }
    }

    #[test]
    fn eigenvalue_violation() {
        let d = Domain { lo: vec![-1.0, -1.0], hi: vec![1.0, 1.0], periodic: false };
        let m = ExprMetric::from_strs(d, &[&["1 - 0.2*pow(x1, 2)", "0"], &["0", "1"]]).unwrap();
        let rep = is_admissible(&m, &[0.0, 0.0], 0.9, 0, 0.1).unwrap();
        assert!(!rep.admissible && rep.margin_eigen < 0.0);
    }

    #[test]
    fn flat_radius_is_capped() {
        let s = admissible_radius(&flat_torus(2), &[0.0, 0.0], RadiusOpts::new(2, 0.1)).unwrap();
        assert_eq!(s.r_eps, 1.0);
        assert!(s.capped && !s.degenerate);
    }

    #[test]
    fn sphere_radius_degenerates_off_equator() {
        let m = sphere_chart();
        let opts = RadiusOpts::new(1, 0.1);
        let eq = admissible_radius(&m, &[std::f64::consts::FRAC_PI_2, 0.0], opts).unwrap();
        assert!(!eq.degenerate && eq.r_eps < 1.0);
        let off = admissible_radius(&m, &[std::f64::consts::FRAC_PI_2 + 0.5, 0.0], opts).unwrap();
        assert!(off.degenerate);
        assert_eq!(off.r_prime, BISECTION_TOL);
    }

    #[test]
    fn perturbed_field_varies_slowly() {
        let m = perturbed_euclidean(0.1, 1.0);
        let grid = m.domain().grid(12);
        let field = radius_field(&m, &grid, RadiusOpts::new(1, 0.1)).unwrap();
        let dist = GraphDistance::new(&m, &grid);
        let slack = BISECTION_TOL + grid.h_max();
        assert!(check_slow_variation(&field, &dist, slack).pass);
        assert!(check_lipschitz(&field, &dist, slack).pass);
    }

    proptest! {
        #[test]
        fn radius_monotone_in_eps(x in -3.0f64..3.0, y in -3.0f64..3.0, e1 in 0.01f64..0.2, de in 0.0f64..0.2) {
            let m = perturbed_euclidean(0.1, 1.0);
            let a = admissible_radius(&m, &[x, y], RadiusOpts::new(1, e1)).unwrap();
            let b = admissible_radius(&m, &[x, y], RadiusOpts::new(1, e1 + de)).unwrap();
            prop_assert!(a.r_eps <= b.r_eps);
        }

        #[test]
        fn nesting_in_order_and_eps(x in -3.0f64..3.0, y in -3.0f64..3.0, r in 0.05f64..1.5, e in 0.02f64..0.3) {
            let m = perturbed_euclidean(0.05, 1.0);
            let hi = is_admissible(&m, &[x, y], r, 2, e).unwrap();
            let lo = is_admissible(&m, &[x, y], r, 1, e).unwrap();
            let loose = is_admissible(&m, &[x, y], r, 2, (e * 1.5).min(0.99)).unwrap();
            if hi.admissible {
                prop_assert!(lo.admissible);
                prop_assert!(loose.admissible);
            }
        }
    }
}
