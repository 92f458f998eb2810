use crate::output::{PlotData, Table, Writer};
use heatforms_core::covering::{build_admissible_covering, CoverOpts};
use heatforms_core::duhamel::{DirectSolver, DuhamelSolver, SeriesConfig};
use heatforms_core::estimates::{
    corpus, exponent, exponent_fit, global_and_classical_suite, l2_contraction_check, local_estimate_suite, log_space,
    EstimateReport,
};
use heatforms_core::euclid_heat::{kernel_lr_norm, smoothing_exponent};
use heatforms_core::laplacian_forms::assemble_discrete;
use heatforms_core::metric_charts::{
    check_lipschitz, check_slow_variation, radius_field, required_order, ChartMetric, GraphDistance, RadiusOpts,
    BISECTION_TOL,
};
use heatforms_core::{Error, Scenario};
use serde_json::{json, Value};

/// Why a run stopped short of success.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Refusal(String),
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Refusal(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Refusal(m) | CliError::Failed(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Scenario { .. }
            | Error::InvalidParameter(_)
            | Error::Parse { .. }
            | Error::DimensionMismatch { .. }
            | Error::DegreeTooLarge { .. }
            | Error::BadDimension(_)
            | Error::AdmissibilityOrder { .. }
            | Error::InsufficientOrder { .. } => CliError::Usage(msg),
            Error::SeriesDivergent { .. } | Error::NonFinite(_) | Error::SingularMetric(_) | Error::Degenerate(_) => {
                CliError::Refusal(msg)
            }
            Error::NonPositiveTime(_) | Error::BallOutsideChart { .. } => CliError::Usage(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failed(format!("i/o: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Failures and refused stages of one command.
#[derive(Debug, Default)]
pub struct Outcome {
    pub failures: Vec<String>,
    pub refusals: Vec<String>,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.failures.is_empty() && self.refusals.is_empty()
    }

    pub fn merge(&mut self, prefix: &str, other: Outcome) {
        self.failures.extend(other.failures.into_iter().map(|f| format!("{prefix}: {f}")));
        self.refusals.extend(other.refusals.into_iter().map(|f| format!("{prefix}: {f}")));
    }

    /// Fold in a stage result; refusals are recorded and the sweep goes on.
    fn stage(&mut self, prefix: &str, res: CliResult<Outcome>) -> CliResult<()> {
        match res {
            Ok(o) => self.merge(prefix, o),
            Err(CliError::Refusal(m)) => self.refusals.push(format!("{prefix}: {m}")),
            Err(e) => return Err(e),
        }
        Ok(())
    }
}

fn f(v: f64) -> String {
    format!("{v:.12e}")
}

pub fn kernel_check(w: &mut Writer, n: usize, r: f64, gamma: &[usize]) -> CliResult<Outcome> {
    if gamma.len() != n {
        return Err(CliError::Usage(format!("--gamma needs {n} entries, got {}", gamma.len())));
    }
    let times = log_space(0.1, 10.0, 25);
    let values: Vec<f64> = times.iter().map(|&t| kernel_lr_norm(n, gamma, r, t)).collect::<Result<_, _>>()?;
    let fit = exponent_fit(&times, &values)?;
    let expected = -smoothing_exponent(n, gamma, 1.0, r);
    let zero = vec![0; n];
    let mass_err = times
        .iter()
        .map(|&t| kernel_lr_norm(n, &zero, 1.0, t).map(|m| (m - 1.0).abs()))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let mut out = Outcome::default();
    if (fit.slope - expected).abs() > 1e-6 {
        out.failures.push(format!("slope {} differs from {expected} by more than 1e-6", fit.slope));
    }
    if mass_err > 1e-9 {
        out.failures.push(format!("kernel mass deviates from 1 by {mass_err:e}"));
    }
    let mut table = Table::new(&["t", "norm"]);
    for (t, v) in times.iter().zip(&values) {
        table.push(vec![f(*t), f(*v)]);
    }
    w.json(
        "kernel-check.json",
        out.pass(),
        &out.failures,
        json!({"n": n, "r": exponent::label(r), "gamma": gamma, "slope": fit.slope, "expected_slope": expected,
               "intercept": fit.intercept, "residual": fit.residual, "mass_error": mass_err}),
    )?;
    w.csv("kernel-check.csv", &table)?;
    w.dat(&PlotData { name: "kernel-check".into(), points: times.iter().zip(&values).map(|(t, v)| (t.ln(), v.ln())).collect() })?;
    Ok(out)
}

fn betas(s: &Scenario) -> Vec<usize> {
    let mut b: Vec<usize> = s.p.iter().flat_map(|&p| s.k.iter().map(move |&k| required_order(p, k))).collect();
    b.sort_unstable();
    b.dedup();
    b
}

pub fn radius(w: &mut Writer, s: &Scenario) -> CliResult<Outcome> {
    let metric = s.metric()?;
    let grid = metric.domain().grid(s.resolution);
    let dist = GraphDistance::new(&metric, &grid);
    let slack = BISECTION_TOL + grid.h_max();
    let mut out = Outcome::default();
    let mut summaries = Vec::new();
    let mut table = Table::new(&["beta", "index", "x", "r_prime", "r_eps", "degenerate", "capped"]);
    for beta in betas(s) {
        let field = radius_field(&metric, &grid, RadiusOpts::new(beta, s.eps))?;
        let lip = check_lipschitz(&field, &dist, slack);
        let slow = check_slow_variation(&field, &dist, slack);
        if !lip.pass {
            out.failures.push(format!("beta={beta}: {} Lipschitz violations, worst excess {}", lip.violations, lip.worst_excess));
        }
        if !slow.pass {
            out.failures.push(format!("beta={beta}: {} slow-variation violations, worst excess {}", slow.violations, slow.worst_excess));
        }
        let r_eps = field.r_eps();
        summaries.push(json!({
            "beta": beta,
            "eta": field.eta(),
            "max_r_eps": r_eps.iter().cloned().fold(0.0, f64::max),
            "degenerate": field.degenerate_count(),
            "lipschitz": lip,
            "slow_variation": slow,
        }));
        for (i, sm) in field.samples.iter().enumerate() {
            let x = sm.point.iter().map(|v| format!("{v:.12e}")).collect::<Vec<_>>().join(" ");
            table.push(vec![beta.to_string(), i.to_string(), x, f(sm.r_prime), f(sm.r_eps), sm.degenerate.to_string(), sm.capped.to_string()]);
        }
    }
    w.json("radius.json", out.pass(), &out.failures, json!({"slack": slack, "fields": summaries}))?;
    w.csv("radius.csv", &table)?;
    Ok(out)
}

pub fn cover(w: &mut Writer, s: &Scenario) -> CliResult<Outcome> {
    let metric = s.metric()?;
    let grid = metric.domain().grid(s.resolution);
    let beta = *betas(s).last().expect("validated lists are nonempty");
    let field = radius_field(&metric, &grid, RadiusOpts::new(beta, s.eps))?;
    let dist = GraphDistance::new(&metric, &grid);
    let opts = CoverOpts { divisor: s.divisor, dilation: s.dilation, slack: grid.h_max() };
    let cov = build_admissible_covering(&field, &dist, opts)?;
    let c = &cov.covering;
    let mut out = Outcome::default();
    if !c.disjoint {
        out.failures.push("selected balls are not pairwise disjoint".into());
    }
    if !c.covers {
        out.failures.push("dilated selection does not cover every candidate".into());
    }
    if !c.overlap_within_bound() {
        out.failures.push(format!("overlap {} exceeds T = {:?}", c.max_overlap(), c.bound_t));
    }
    let entries = c.export(&cov.members);
    w.json(
        "cover.json",
        out.pass(),
        &out.failures,
        json!({
            "beta": beta, "divisor": s.divisor, "dilation": s.dilation, "candidates": c.candidates.len(),
            "selected": c.selected.len(), "excluded": c.excluded.len(), "disjoint": c.disjoint, "covers": c.covers,
            "max_overlap": c.max_overlap(), "bound_t": c.bound_t, "histogram": c.histogram(), "balls": entries,
        }),
    )?;
    let mut table = Table::new(&["center", "r", "5r", "overlap_count"]);
    for e in &entries {
        let x = e.center.iter().map(|v| format!("{v:.12e}")).collect::<Vec<_>>().join(" ");
        table.push(vec![x, f(e.r), f(e.dilated_r), e.overlap_count.to_string()]);
    }
    w.csv("cover.csv", &table)?;
    Ok(out)
}

pub fn duhamel_compare(w: &mut Writer, s: &Scenario) -> CliResult<Outcome> {
    let metric = s.metric()?;
    let grid = metric.domain().grid(s.resolution);
    let h2 = grid.h_max().powi(2);
    let center: Vec<f64> = (0..metric.dim()).map(|a| 0.5 * (metric.domain().lo[a] + metric.domain().hi[a])).collect();
    let mut out = Outcome::default();
    let mut results = Vec::new();
    let mut table = Table::new(&["p", "t", "rel_error", "budget", "tail", "rho", "first_ratio", "term_norms", "within"]);
    for &p in &s.p {
        let cfg = SeriesConfig { order: s.order, nodes: s.nodes, delta: s.delta, eps: s.eps, k: 0, r: 2.0 };
        let solver = DuhamelSolver::new(&metric, &grid, p, cfg.clone())?;
        let op = assemble_discrete(&metric, p, &grid)?;
        let direct = DirectSolver::new(&op);
        let omega = corpus(metric.domain(), p, &center, s.seed)?[0].field(&grid, metric.domain())?;
        let mut plot = Vec::new();
        let mut rows = Vec::new();
        for &t in &s.compare_times {
            let res = solver.solve(&omega, t)?;
            let reference = direct.solve(&omega, t)?;
            let base = reference.coefficient_l2();
            let diff: f64 = res
                .u
                .to_vec()
                .iter()
                .zip(reference.to_vec())
                .map(|(a, b)| (a - b).powi(2) * grid.cell_volume())
                .sum::<f64>()
                .sqrt();
            let rel = if base > 0.0 { diff / base } else { diff };
            let budget = if base > 0.0 { res.tail / base } else { res.tail } + 5.0 * h2;
            let within = rel <= budget;
            if !within {
                out.failures.push(format!("p={p} t={t}: relative error {rel:e} exceeds budget {budget:e}"));
            }
            if rel > 0.0 {
                plot.push((t.ln(), rel.ln()));
            }
            let r1 = res.ratios.first().copied().unwrap_or(0.0);
            table.push(vec![
                p.to_string(),
                f(t),
                f(rel),
                f(budget),
                f(res.tail),
                f(res.rho),
                f(r1),
                res.term_norms.iter().map(|v| format!("{v:.6e}")).collect::<Vec<_>>().join(" "),
                within.to_string(),
            ]);
            rows.push((t, res.rho, res.ratios.clone(), json!({
                "t": t, "rel_error": rel, "budget": budget, "tail": res.tail, "rho": res.rho,
                "term_norms": res.term_norms, "ratios": res.ratios, "within": within,
            })));
        }
        // One constant c with every measured ratio ≤ c·ρ(t).
        let c = rows
            .iter()
            .flat_map(|(_, rho, ratios, _)| ratios.iter().map(move |r| r / rho))
            .fold(0.0, f64::max);
        results.push(json!({"p": p, "ratio_constant": c, "times": rows.into_iter().map(|r| r.3).collect::<Vec<Value>>()}));
        w.dat(&PlotData { name: format!("duhamel-compare_p{p}"), points: plot })?;
    }
    w.json("duhamel-compare.json", out.pass(), &out.failures, json!({"h": grid.h_max(), "order": s.order, "nodes": s.nodes, "runs": results}))?;
    w.csv("duhamel-compare.csv", &table)?;
    Ok(out)
}

fn report_outcome(reports: &[EstimateReport]) -> Outcome {
    let mut out = Outcome::default();
    for r in reports {
        for f in &r.failures {
            out.failures.push(format!("{:?} p={} k={} r={}: {f}", r.kind, r.p, r.k, exponent::label(r.r)));
        }
    }
    out
}

fn write_reports(w: &mut Writer, stem: &str, reports: &[EstimateReport]) -> CliResult<Outcome> {
    let out = report_outcome(reports);
    let rows: Vec<_> = reports.iter().flat_map(|r| r.csv_rows()).collect();
    w.json(&format!("{stem}.json"), out.pass(), &out.failures, serde_json::to_value(reports).map_err(|e| CliError::Failed(e.to_string()))?)?;
    w.csv(&format!("{stem}.csv"), &Table::from_records(&rows)?)?;
    for r in reports {
        let name = format!("{stem}_p{}_k{}_r{}", r.p, r.k, exponent::label(r.r));
        w.dat(&PlotData { name, points: r.plot_points() })?;
    }
    Ok(out)
}

pub fn local_check(w: &mut Writer, s: &Scenario) -> CliResult<Outcome> {
    let metric = s.metric()?;
    let mut reports = Vec::new();
    for &p in &s.p {
        reports.extend(local_estimate_suite(&metric, &s.estimate_config(p))?);
    }
    write_reports(w, "local-check", &reports)
}

/// Global and classical reports share their solutions.
pub fn global_reports(s: &Scenario) -> CliResult<(Vec<EstimateReport>, Vec<EstimateReport>)> {
    let metric = s.metric()?;
    let (mut g, mut c) = (Vec::new(), Vec::new());
    for &p in &s.p {
        let (a, b) = global_and_classical_suite(&metric, &s.estimate_config(p))?;
        g.extend(a);
        c.extend(b);
    }
    Ok((g, c))
}

pub fn global_check(w: &mut Writer, s: &Scenario) -> CliResult<Outcome> {
    let (g, _) = global_reports(s)?;
    write_reports(w, "global-check", &g)
}

pub fn classical_check(w: &mut Writer, s: &Scenario) -> CliResult<Outcome> {
    let (_, c) = global_reports(s)?;
    write_reports(w, "classical-check", &c)
}

pub fn contraction(w: &mut Writer, s: &Scenario) -> CliResult<Outcome> {
    let metric = s.metric()?;
    let grid = metric.domain().grid(s.resolution);
    let center: Vec<f64> = (0..metric.dim()).map(|a| 0.5 * (metric.domain().lo[a] + metric.domain().hi[a])).collect();
    let times = log_space(0.01, 20.0, 20);
    let mut out = Outcome::default();
    let mut reports = Vec::new();
    let mut table = Table::new(&["p", "t", "norm", "omega_norm"]);
    for &p in &s.p {
        let op = assemble_discrete(&metric, p, &grid)?;
        let els = corpus(metric.domain(), p, &center, s.seed)?;
        let omega = els.iter().find(|e| e.id.starts_with("random")).expect("corpus has a random element").field(&grid, metric.domain())?;
        let rep = l2_contraction_check(&op, &omega, &times)?;
        if !rep.pass {
            out.failures.push(format!("p={p}: contraction {} monotone {} worst excess {:e}", rep.contraction, rep.monotone, rep.worst_excess));
        }
        for (t, n) in rep.times.iter().zip(&rep.norms) {
            table.push(vec![p.to_string(), f(*t), f(*n), f(rep.omega_norm)]);
        }
        reports.push(json!({"p": p, "report": rep}));
    }
    w.json("contraction.json", out.pass(), &out.failures, json!(reports))?;
    w.csv("contraction.csv", &table)?;
    Ok(out)
}

pub fn sweep(w: &mut Writer, s: &Scenario) -> CliResult<Outcome> {
    let mut out = Outcome::default();
    out.stage("radius", radius(w, s))?;
    out.stage("cover", cover(w, s))?;
    out.stage("duhamel-compare", duhamel_compare(w, s))?;
    out.stage("contraction", contraction(w, s))?;
    out.stage("local-check", local_check(w, s))?;
    match global_reports(s) {
        Ok((g, c)) => {
            out.stage("global-check", write_reports(w, "global-check", &g))?;
            out.stage("classical-check", write_reports(w, "classical-check", &c))?;
        }
        Err(e) => out.stage("global-check", Err(e))?,
    }
    let files: Vec<String> = w.written.iter().filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned())).collect();
    let mut listed = out.failures.clone();
    listed.extend(out.refusals.iter().map(|r| format!("refused {r}")));
    w.json("sweep.json", out.pass(), &listed, json!({"files": files, "refusals": out.refusals}))?;
    Ok(out)
}
