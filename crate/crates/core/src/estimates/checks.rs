use super::corpus::{ball_cutoff, corpus, CorpusElement, DEFAULT_SEED};
use super::fit::{exponent_fit, log_space};
use super::report::{
    alpha, short_times, time_factor, EstimateKind, EstimateReport, EstimateRow, Regime, RegimeFit, REPORT_SCHEMA_VERSION,
    SIGN_CONVENTION, STABILITY_TOL,
};
use crate::covering::{build_admissible_covering, norm_equivalence, CoverOpts};
use crate::duhamel::{DirectSolver, DuhamelSolver, SeriesConfig};
use crate::error::{Error, Result};
use crate::grid::{lr_norm, Grid};
use crate::laplacian_forms::assemble_discrete;
use crate::metric_charts::{
    admissible_radius, covariant_derivative, radius_field, required_order, ricci, tensor_modulus, ChartMetric,
    FormField, GraphDistance, MetricOnGrid, RadiusField, RadiusOpts,
};
use rayon::prelude::*;
use std::collections::BTreeMap;

/// Local checks refuse balls narrower than this many grid steps.
pub const MIN_BALL_STEPS: f64 = 2.0;

/// Parameters shared by the estimate checks.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateConfig {
    pub scenario: String,
    pub p: usize,
    pub ks: Vec<usize>,
    pub rs: Vec<f64>,
    pub eps: f64,
    pub delta: f64,
    pub short_times: Vec<f64>,
    pub long_times: Vec<f64>,
    /// Grid sizes per axis, coarsest first; the last one is reported.
    pub sizes: Vec<usize>,
    pub seed: u64,
    /// Duhamel truncation order and quadrature nodes (local checks).
    pub order: usize,
    pub nodes: usize,
    /// η below this puts a scenario outside the classical regime.
    pub eta_tol: f64,
}

impl EstimateConfig {
    pub fn new(scenario: &str, p: usize) -> Self {
        let delta = 0.25;
        EstimateConfig {
            scenario: scenario.into(),
            p,
            ks: vec![0, 1, 2],
            rs: vec![1.0, 2.0, f64::INFINITY],
            eps: 0.05,
            delta,
            short_times: short_times(delta, 12),
            long_times: log_space(1.0, 20.0, 12),
            sizes: vec![16, 32],
            seed: DEFAULT_SEED,
            order: 2,
            nodes: 16,
            eta_tol: 1e-2,
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.short_times.iter().chain(&self.long_times).cloned().collect()
    }

    fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.short_times.iter().any(|&t| !(t > self.delta && t < 1.0)) {
            return Err(Error::InvalidParameter("short times must lie in (delta, 1)".into()));
        }
        if self.long_times.iter().any(|&t| !(t >= 1.0 && t.is_finite())) {
            return Err(Error::InvalidParameter("long times must be finite and at least 1".into()));
        }
        if self.rs.iter().any(|&r| !(r >= 1.0)) {
            return Err(Error::InvalidParameter("exponents r must be at least 1".into()));
        }
        if self.sizes.is_empty() || self.ks.is_empty() || self.rs.is_empty() {
            return Err(Error::InvalidParameter("sizes, ks and rs must be nonempty".into()));
        }
        Ok(())
    }

    /// Admissibility order covering every requested k.
    pub fn beta(&self) -> usize {
        self.ks.iter().map(|&k| required_order(self.p, k)).max().unwrap_or(1)
    }
}

fn center_of(metric: &dyn ChartMetric) -> Vec<f64> {
    let d = metric.domain();
    (0..d.dim()).map(|a| 0.5 * (d.lo[a] + d.hi[a])).collect()
}

/// Measurements at one grid size, keyed by (k index, r index).
struct Study {
    rows: BTreeMap<(usize, usize), Vec<EstimateRow>>,
    /// Unweighted rows for the classical check (global studies only).
    plain: BTreeMap<(usize, usize), Vec<EstimateRow>>,
    radius: Option<(f64, f64)>,
    eta: Option<f64>,
    degenerate: bool,
    field: Option<RadiusField>,
    assembly_failures: Vec<String>,
}

fn masked_norm(values: &[f64], mask: &[bool], volume: &[f64], r: f64) -> f64 {
    let v: Vec<f64> = values.iter().zip(mask).map(|(v, &m)| if m { *v } else { 0.0 }).collect();
    let dv: Vec<f64> = volume.iter().zip(mask).map(|(v, &m)| if m { *v } else { 0.0 }).collect();
    lr_norm(&v, r, &dv)
}

fn rel_diff(a: &FormField, b: &FormField) -> f64 {
    let den = b.coefficient_l2();
    let num: f64 = a
        .comps
        .iter()
        .flatten()
        .zip(b.comps.iter().flatten())
        .map(|(x, y)| (x - y).powi(2) * a.grid.cell_volume())
        .sum::<f64>()
        .sqrt();
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

fn make_row(corpus: &str, t: f64, lhs: f64, omega_norm: f64, shape: f64, cross: Option<(f64, f64)>) -> EstimateRow {
    let den = shape * omega_norm;
    EstimateRow {
        corpus: corpus.into(),
        t,
        regime: Regime::of(t),
        lhs,
        omega_norm,
        shape,
        ratio: if den > 0.0 { lhs / den } else { 0.0 },
        cross_error: cross.map(|c| c.0),
        cross_budget: cross.map(|c| c.1),
    }
}

/// |∇^k u| at every grid point.
fn derivative_moduli(mg: &MetricOnGrid, u: &FormField, ks: &[usize]) -> Result<Vec<Vec<f64>>> {
    ks.iter()
        .map(|&k| Ok(tensor_modulus(mg, &covariant_derivative(mg, u, k)?, u.p)))
        .collect()
}

fn local_study(metric: &dyn ChartMetric, cfg: &EstimateConfig, size: usize, elements: &[CorpusElement]) -> Result<Study> {
    let grid: Grid = metric.domain().grid(size);
    let mg = MetricOnGrid::new(metric, &grid)?;
    let x0 = center_of(metric);
    let beta = cfg.beta();
    let sample = admissible_radius(metric, &x0, RadiusOpts::new(beta, cfg.eps))?;
    if sample.degenerate {
        return Err(Error::Degenerate(format!("no ({beta}, {})-admissible ball at {x0:?}", cfg.eps)));
    }
    let radius = sample.r_eps;
    if radius < MIN_BALL_STEPS * grid.h_max() {
        return Err(Error::Degenerate(format!(
            "admissible ball radius {radius:.4} spans fewer than {MIN_BALL_STEPS} grid steps at resolution {size}"
        )));
    }
    let r_phi = (1.0 - cfg.eps) * radius;
    let chi = ball_cutoff(&grid, &x0, radius);
    let mask: Vec<bool> = (0..grid.len())
        .map(|i| grid.displacement(&x0, &grid.point(i)).iter().map(|v| v * v).sum::<f64>().sqrt() < radius)
        .collect();
    let series = SeriesConfig { order: cfg.order, nodes: cfg.nodes, delta: cfg.delta, eps: cfg.eps, k: 0, r: 2.0 };
    let duhamel = DuhamelSolver::new(metric, &grid, cfg.p, series)?;
    let op = assemble_discrete(metric, cfg.p, &grid)?;
    let direct = DirectSolver::new(&op);
    let times = cfg.times();
    let h2 = grid.h_max().powi(2);
    let a = alpha(cfg.p) as f64;
    let per_element: Vec<Vec<((usize, usize), EstimateRow)>> = elements
        .par_iter()
        .map(|el| -> Result<Vec<_>> {
            let omega = el.field_with_cutoff(&grid, metric.domain(), &chi)?;
            let omega_mod = omega.modulus(&mg);
            let reference = direct.solve_many(&omega, &times)?;
            let mut out = Vec::new();
            for (ti, &t) in times.iter().enumerate() {
                let res = duhamel.solve(&omega, t)?;
                let base = reference[ti].coefficient_l2();
                let cross = if base > 0.0 {
                    Some((rel_diff(&res.u, &reference[ti]), res.tail / base + 5.0 * h2))
                } else {
                    None
                };
                let moduli = derivative_moduli(&mg, &res.u, &cfg.ks)?;
                for (ki, &k) in cfg.ks.iter().enumerate() {
                    let kf = k as f64;
                    let rpow = match Regime::of(t) {
                        Regime::Long if k == 0 => radius.powf(-a),
                        Regime::Long => r_phi.powf(-kf - a),
                        Regime::Short => radius.powf(-kf - a),
                    };
                    let shape = time_factor(cfg.p, k, cfg.delta, t) * rpow;
                    for (ri, &r) in cfg.rs.iter().enumerate() {
                        let lhs = masked_norm(&moduli[ki], &mask, &mg.volume, r);
                        let on = masked_norm(&omega_mod, &mask, &mg.volume, r);
                        out.push(((ki, ri), make_row(&el.id, t, lhs, on, shape, cross)));
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut rows: BTreeMap<(usize, usize), Vec<EstimateRow>> = BTreeMap::new();
    for (key, row) in per_element.into_iter().flatten() {
        rows.entry(key).or_default().push(row);
    }
    Ok(Study {
        rows,
        plain: BTreeMap::new(),
        radius: Some((radius, r_phi)),
        eta: None,
        degenerate: false,
        field: None,
        assembly_failures: vec![],
    })
}

fn global_study(metric: &dyn ChartMetric, cfg: &EstimateConfig, size: usize, elements: &[CorpusElement]) -> Result<Study> {
    let grid = metric.domain().grid(size);
    let beta = cfg.beta();
    let field = radius_field(metric, &grid, RadiusOpts::new(beta, cfg.eps))?;
    let degenerate = field.degenerate_count() > 0 || !(field.eta() >= cfg.eta_tol);
    let eta = field.eta();
    if degenerate {
        return Ok(Study {
            rows: BTreeMap::new(),
            plain: BTreeMap::new(),
            radius: None,
            eta: Some(if eta.is_finite() { eta } else { 0.0 }),
            degenerate,
            field: Some(field),
            assembly_failures: vec![],
        });
    }
    let mg = MetricOnGrid::new(metric, &grid)?;
    let r_eps = field.r_eps();
    let cover = build_admissible_covering(&field, &GraphDistance::new(metric, &grid), CoverOpts::default())?;
    let op = assemble_discrete(metric, cfg.p, &grid)?;
    let direct = DirectSolver::new(&op);
    let times = cfg.times();
    let a = alpha(cfg.p) as f64;
    type Out = (Vec<((usize, usize), EstimateRow, EstimateRow)>, Vec<String>);
    let per_element: Vec<Out> = elements
        .par_iter()
        .map(|el| -> Result<Out> {
            let omega = el.field(&grid, metric.domain())?;
            let omega_mod = omega.modulus(&mg);
            let sols = direct.solve_many(&omega, &times)?;
            let mut out = Vec::new();
            let mut fails = Vec::new();
            for (u, &t) in sols.iter().zip(&times) {
                let moduli = derivative_moduli(&mg, u, &cfg.ks)?;
                for (ki, &k) in cfg.ks.iter().enumerate() {
                    let shape = time_factor(cfg.p, k, cfg.delta, t);
                    for (ri, &r) in cfg.rs.iter().enumerate() {
                        let gamma_w = (k as f64 + a) * r;
                        let on = lr_norm(&omega_mod, r, &mg.volume);
                        let plain = lr_norm(&moduli[ki], r, &mg.volume);
                        let weighted = if r.is_infinite() {
                            plain
                        } else {
                            let w: Vec<f64> = r_eps.iter().map(|v| v.powf(gamma_w)).collect();
                            let eq = norm_equivalence(&cover, &r_eps, &moduli[ki], &mg.volume, gamma_w, r)?;
                            if !(eq.lower_holds && eq.upper_holds) {
                                fails.push(format!("{} t={t} k={k} r={r}: covering assembly inconsistent", el.id));
                            }
                            crate::covering::weighted_norm(&moduli[ki], &w, &mg.volume, r)?
                        };
                        out.push((
                            (ki, ri),
                            make_row(&el.id, t, weighted, on, shape, None),
                            make_row(&el.id, t, plain, on, shape, None),
                        ));
                    }
                }
            }
            Ok((out, fails))
        })
        .collect::<Result<_>>()?;
    let mut rows: BTreeMap<(usize, usize), Vec<EstimateRow>> = BTreeMap::new();
    let mut plain: BTreeMap<(usize, usize), Vec<EstimateRow>> = BTreeMap::new();
    let mut assembly_failures = Vec::new();
    for (out, fails) in per_element {
        for (key, w, p) in out {
            rows.entry(key).or_default().push(w);
            plain.entry(key).or_default().push(p);
        }
        assembly_failures.extend(fails);
    }
    Ok(Study { rows, plain, radius: None, eta: Some(eta), degenerate, field: Some(field), assembly_failures })
}

fn max_ratio(rows: &[EstimateRow], regime: Regime) -> f64 {
    rows.iter().filter(|r| r.regime == regime).map(|r| r.ratio).fold(0.0, f64::max)
}

fn decay_fit(rows: &[EstimateRow], regime: Regime) -> Option<super::fit::ExponentFit> {
    let mut by_t: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.regime == regime && r.omega_norm > 0.0) {
        let e = by_t.entry(r.t.to_bits()).or_insert((r.t, 0.0));
        e.1 = e.1.max(r.lhs / r.omega_norm);
    }
    let (t, v): (Vec<f64>, Vec<f64>) = by_t.values().cloned().unzip();
    exponent_fit(&t, &v).ok()
}

/// One fitted constant per regime from the finest rows, with the drift
/// against coarser sizes. `scale[i]` multiplies the size-i constant.
fn fit_regimes(per_size: &[(usize, &[EstimateRow])], scale: &[f64], finest_rows: &[EstimateRow], dominate: bool) -> Vec<RegimeFit> {
    [Regime::Short, Regime::Long]
        .into_iter()
        .filter(|&reg| finest_rows.iter().any(|r| r.regime == reg))
        .map(|reg| {
            let constants_by_size: Vec<(usize, f64)> =
                per_size.iter().zip(scale).map(|((n, rows), s)| (*n, s * max_ratio(rows, reg))).collect();
            let constant = constants_by_size.last().map(|c| c.1).unwrap_or(0.0);
            let relative_change = if constants_by_size.len() >= 2 {
                let coarse = constants_by_size[constants_by_size.len() - 2].1;
                Some(if coarse > 0.0 { (constant / coarse - 1.0).abs() } else if constant > 0.0 { f64::INFINITY } else { 0.0 })
            } else {
                None
            };
            let tol = 1e-12;
            let dominated = !dominate
                || finest_rows.iter().filter(|r| r.regime == reg).all(|r| r.lhs <= constant * r.shape * r.omega_norm * (1.0 + tol) + 1e-300);
            RegimeFit {
                regime: reg,
                constant,
                constants_by_size,
                relative_change,
                stable: relative_change.map_or(true, |c| c <= STABILITY_TOL),
                dominated,
                decay_fit: decay_fit(finest_rows, reg),
            }
        })
        .collect()
}

fn base_report(cfg: &EstimateConfig, kind: EstimateKind, k: usize, r: f64) -> EstimateReport {
    EstimateReport {
        schema_version: REPORT_SCHEMA_VERSION,
        sign_convention: SIGN_CONVENTION.into(),
        scenario: cfg.scenario.clone(),
        kind,
        p: cfg.p,
        k,
        r,
        eps: cfg.eps,
        delta: cfg.delta,
        alpha: alpha(cfg.p),
        beta: cfg.beta(),
        grid_size: *cfg.sizes.last().expect("validated"),
        seed: cfg.seed,
        times: cfg.times(),
        radius: None,
        eta: None,
        ricci_bound: None,
        in_regime: true,
        rows: vec![],
        fits: vec![],
        verified: true,
        pass: true,
        failures: vec![],
    }
}

fn finish(mut rep: EstimateReport) -> EstimateReport {
    for f in &rep.fits {
        if !f.dominated {
            rep.failures.push(format!("{:?} regime: constant {} does not dominate every time", f.regime, f.constant));
        }
        if !f.stable {
            rep.failures.push(format!(
                "{:?} regime: constant drifts by {:.3} under refinement {:?}",
                f.regime,
                f.relative_change.unwrap_or(f64::NAN),
                f.constants_by_size
            ));
        }
    }
    rep.verified = rep
        .rows
        .iter()
        .all(|r| match (r.cross_error, r.cross_budget) {
            (Some(e), Some(b)) => e <= b,
            _ => true,
        });
    rep.pass = rep.failures.is_empty();
    rep
}

fn elements_for(metric: &dyn ChartMetric, cfg: &EstimateConfig) -> Result<Vec<CorpusElement>> {
    corpus(metric.domain(), cfg.p, &center_of(metric), cfg.seed)
}

/// Local estimates on the admissible ball at the chart centre, one report per (k, r).
pub fn local_estimate_suite(metric: &dyn ChartMetric, cfg: &EstimateConfig) -> Result<Vec<EstimateReport>> {
    cfg.validate()?;
    let elements = elements_for(metric, cfg)?;
    let studies: Vec<(usize, Study)> =
        cfg.sizes.iter().map(|&n| local_study(metric, cfg, n, &elements).map(|s| (n, s))).collect::<Result<_>>()?;
    let finest = &studies.last().expect("validated").1;
    let mut out = Vec::new();
    for (ki, &k) in cfg.ks.iter().enumerate() {
        for (ri, &r) in cfg.rs.iter().enumerate() {
            let per_size: Vec<(usize, &[EstimateRow])> = studies.iter().map(|(n, s)| (*n, s.rows[&(ki, ri)].as_slice())).collect();
            let rows = finest.rows[&(ki, ri)].clone();
            let mut rep = base_report(cfg, EstimateKind::Local, k, r);
            rep.radius = finest.radius;
            rep.fits = fit_regimes(&per_size, &vec![1.0; per_size.len()], &rows, true);
            rep.rows = rows;
            out.push(finish(rep));
        }
    }
    Ok(out)
}

fn ricci_bound(metric: &dyn ChartMetric, field: &RadiusField, j: usize) -> Result<Vec<f64>> {
    let stride = (field.samples.len() / 64).max(1);
    let reports: Vec<Vec<f64>> = field
        .samples
        .par_iter()
        .step_by(stride)
        .map(|s| ricci(metric, &s.point, j).map(|r| r.derivative_norms))
        .collect::<Result<_>>()?;
    Ok((0..=j).map(|i| reports.iter().map(|r| r[i]).fold(0.0, f64::max)).collect())
}

/// Weighted global estimates and their unweighted classical form, computed
/// from the same solutions: (global reports, classical reports).
pub fn global_and_classical_suite(metric: &dyn ChartMetric, cfg: &EstimateConfig) -> Result<(Vec<EstimateReport>, Vec<EstimateReport>)> {
    cfg.validate()?;
    let elements = elements_for(metric, cfg)?;
    let studies: Vec<(usize, Study)> =
        cfg.sizes.iter().map(|&n| global_study(metric, cfg, n, &elements).map(|s| (n, s))).collect::<Result<_>>()?;
    let finest = &studies.last().expect("validated").1;
    let degenerate = studies.iter().any(|(_, s)| s.degenerate);
    let ricci_j = cfg.beta().min(metric.max_order().saturating_sub(2));
    let ricci = match &finest.field {
        Some(f) if !degenerate => Some(ricci_bound(metric, f, ricci_j)?),
        _ => None,
    };
    let (mut globals, mut classicals) = (Vec::new(), Vec::new());
    for (ki, &k) in cfg.ks.iter().enumerate() {
        for (ri, &r) in cfg.rs.iter().enumerate() {
            let mut g = base_report(cfg, EstimateKind::Global, k, r);
            let mut c = base_report(cfg, EstimateKind::Classical, k, r);
            g.eta = finest.eta;
            c.eta = finest.eta;
            c.ricci_bound = ricci.clone();
            if degenerate {
                let msg = format!("eta = {:?} below tolerance {}", finest.eta, cfg.eta_tol);
                g.in_regime = false;
                c.in_regime = false;
                g.failures.push(format!("admissibility violated: {msg}"));
                c.rows.clear();
                let mut c = finish(c);
                c.verified = false;
                globals.push(finish(g));
                classicals.push(c);
                continue;
            }
            let per_size: Vec<(usize, &[EstimateRow])> = studies.iter().map(|(n, s)| (*n, s.rows[&(ki, ri)].as_slice())).collect();
            let rows = finest.rows[&(ki, ri)].clone();
            g.fits = fit_regimes(&per_size, &vec![1.0; per_size.len()], &rows, true);
            g.failures.extend(finest.assembly_failures.iter().filter(|f| f.contains(&format!("k={k} r={r}"))).cloned());
            g.rows = rows;

            // c(n, r, η) = c·η^{-(k+α)}, fitted on the weighted rows and
            // checked against the unweighted ones.
            let loss = k as f64 + alpha(cfg.p) as f64;
            let scale: Vec<f64> = studies.iter().map(|(_, s)| s.eta.unwrap_or(1.0).powf(-loss)).collect();
            let plain_rows = finest.plain[&(ki, ri)].clone();
            c.fits = fit_regimes(&per_size, &scale, &plain_rows, true);
            c.rows = plain_rows;
            classicals.push(finish(c));
            globals.push(finish(g));
        }
    }
    Ok((globals, classicals))
}

fn single(cfg: &EstimateConfig, k: usize, r: f64) -> EstimateConfig {
    EstimateConfig { ks: vec![k], rs: vec![r], ..cfg.clone() }
}

pub fn local_estimate_check(metric: &dyn ChartMetric, cfg: &EstimateConfig, k: usize, r: f64) -> Result<EstimateReport> {
    Ok(local_estimate_suite(metric, &single(cfg, k, r))?.remove(0))
}

pub fn global_estimate_check(metric: &dyn ChartMetric, cfg: &EstimateConfig, k: usize, r: f64) -> Result<EstimateReport> {
    Ok(global_and_classical_suite(metric, &single(cfg, k, r))?.0.remove(0))
}

pub fn classical_estimate_check(metric: &dyn ChartMetric, cfg: &EstimateConfig, k: usize, r: f64) -> Result<EstimateReport> {
    Ok(global_and_classical_suite(metric, &single(cfg, k, r))?.1.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric_charts::{flat_torus, perturbed_euclidean};

    fn quick(scenario: &str, p: usize, k: usize, r: f64) -> EstimateConfig {
        EstimateConfig { ks: vec![k], rs: vec![r], sizes: vec![16], ..EstimateConfig::new(scenario, p) }
    }

    #[test]
    fn flat_gradient_decays_at_least_like_sqrt() {
        let rep = local_estimate_check(&flat_torus(2), &quick("flat", 0, 1, 2.0), 1, 2.0).unwrap();
        assert!(rep.pass, "{:?}", rep.failures);
        assert!(rep.verified);
        let fit = rep.fit(Regime::Long).unwrap().decay_fit.unwrap();
        assert!(fit.slope <= -0.5 + 0.05, "slope {}", fit.slope);
        let (r, r_phi) = rep.radius.unwrap();
        assert_eq!(r, 1.0);
        assert!((r_phi - 0.95).abs() < 1e-15);
    }

    #[test]
    fn flat_solution_ratio_bounded() {
        let rep = local_estimate_check(&flat_torus(2), &quick("flat", 0, 0, 2.0), 0, 2.0).unwrap();
        let c = rep.fit(Regime::Long).unwrap().constant;
        assert!(c.is_finite() && c > 0.0);
        for row in rep.rows.iter().filter(|r| r.regime == Regime::Long) {
            assert!(row.lhs <= c * row.shape * row.omega_norm * (1.0 + 1e-12));
        }
    }

    #[test]
    fn zero_rows_are_vacuous() {
        let row = make_row("zero", 2.0, 0.0, 0.0, 1.0, None);
        assert_eq!(row.ratio, 0.0);
        let fits = fit_regimes(&[(8, std::slice::from_ref(&row))], &[1.0], std::slice::from_ref(&row), true);
        assert_eq!(fits[0].constant, 0.0);
        assert!(fits[0].dominated && fits[0].stable);
    }

    #[test]
    fn flat_global_matches_unweighted() {
        let (g, c) = global_and_classical_suite(&flat_torus(2), &quick("flat", 1, 1, 2.0)).unwrap();
        let (g, c) = (&g[0], &c[0]);
        assert_eq!(g.eta, Some(1.0));
        for (a, b) in g.rows.iter().zip(&c.rows) {
            assert_eq!(a.lhs, b.lhs);
        }
        assert_eq!(g.fits, c.fits);
        assert!(g.pass && c.pass, "{:?} {:?}", g.failures, c.failures);
    }

    #[test]
    fn small_perturbation_is_classical() {
        let rep = classical_estimate_check(&perturbed_euclidean(0.01, 1.0), &quick("perturbed", 0, 1, 2.0), 1, 2.0).unwrap();
        assert!(rep.in_regime);
        assert!(rep.eta.unwrap() >= 0.5, "eta {:?}", rep.eta);
        assert!(rep.ricci_bound.as_ref().unwrap()[0] > 0.0);
        assert!(rep.pass, "{:?}", rep.failures);
    }

    #[test]
    fn steep_perturbation_is_flagged() {
        let cfg = EstimateConfig { sizes: vec![8], ..quick("steep", 0, 1, 2.0) };
        let rep = classical_estimate_check(&perturbed_euclidean(0.04, 200.0), &cfg, 1, 2.0).unwrap();
        assert!(!rep.in_regime);
        assert!(rep.pass);
        assert!(rep.eta.unwrap() < cfg.eta_tol);
    }

    #[test]
    fn unresolved_ball_is_refused() {
        let e = local_estimate_check(&perturbed_euclidean(0.03, 1.0), &quick("perturbed", 1, 1, 2.0), 1, 2.0).unwrap_err();
        assert!(matches!(e, Error::Degenerate(_)), "{e:?}");
    }

    #[test]
    fn bad_times_rejected() {
        let mut cfg = quick("flat", 0, 0, 2.0);
        cfg.short_times = vec![0.1];
        assert!(local_estimate_check(&flat_torus(2), &cfg, 0, 2.0).is_err());
    }
}
