//! Report types, theorem-shaped right-hand sides and serialization.

use super::fit::ExponentFit;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Carried in every report header.
pub const SIGN_CONVENTION: &str =
    "Delta is the nonnegative Hodge Laplacian (minus div grad on functions); u(t) = exp(-t Delta) omega";

/// Relative drift allowed for a fitted constant under one grid refinement.
pub const STABILITY_TOL: f64 = 0.2;

/// Exponents serialize as numbers, with infinity as the string "inf".
pub mod exponent {
    use super::*;

    pub fn serialize<S: Serializer>(r: &f64, s: S) -> Result<S::Ok, S::Error> {
        if r.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*r)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }

    pub fn label(r: f64) -> String {
        if r.is_infinite() {
            "inf".into()
        } else {
            format!("{r}")
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    Local,
    Global,
    Classical,
}

/// Short: t ∈ (δ, 1). Long: t ≥ 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Short,
    Long,
}

impl Regime {
    pub fn of(t: f64) -> Regime {
        if t < 1.0 {
            Regime::Short
        } else {
            Regime::Long
        }
    }
}

/// Radius-power loss order: 1 for functions, 2 for forms.
pub fn alpha(p: usize) -> u32 {
    if p == 0 {
        1
    } else {
        2
    }
}

/// Time factor of the bound: δ^{1+k/2}/(t^{1+k/2} - δ^{1+k/2}) on (δ, 1);
/// for t ≥ 1, t^{-1/2} for functions with k ≥ 1 and 1 otherwise.
pub fn time_factor(p: usize, k: usize, delta: f64, t: f64) -> f64 {
    let e = 1.0 + k as f64 / 2.0;
    match Regime::of(t) {
        Regime::Short => delta.powf(e) / (t.powf(e) - delta.powf(e)),
        Regime::Long if p == 0 && k >= 1 => t.powf(-0.5),
        Regime::Long => 1.0,
    }
}

/// 12 log-spaced times strictly inside (δ, 1).
pub fn short_times(delta: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|i| delta * (1.0 / delta).powf(i as f64 / (count + 1) as f64)).collect()
}

/// One (corpus element, t) measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub corpus: String,
    pub t: f64,
    pub regime: Regime,
    pub lhs: f64,
    pub omega_norm: f64,
    /// time factor × radius power.
    pub shape: f64,
    /// lhs / (shape·‖ω‖); zero for ω = 0.
    pub ratio: f64,
    /// Relative L² distance between the two solvers, when both ran.
    pub cross_error: Option<f64>,
    /// Allowed cross-solver distance (tail + discretization budget).
    pub cross_budget: Option<f64>,
}

/// The single constant fitted for one regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeFit {
    pub regime: Regime,
    /// max over corpus and times of the ratio.
    pub constant: f64,
    /// Constants at each grid size, coarsest first.
    pub constants_by_size: Vec<(usize, f64)>,
    /// |c_fine / c_coarse - 1|, when two sizes ran.
    pub relative_change: Option<f64>,
    pub stable: bool,
    /// Every row satisfies lhs ≤ c·shape·‖ω‖.
    pub dominated: bool,
    /// Log–log fit of max-corpus lhs/‖ω‖ against t.
    pub decay_fit: Option<ExponentFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema_version: u32,
    pub sign_convention: String,
    pub scenario: String,
    pub kind: EstimateKind,
    pub p: usize,
    pub k: usize,
    #[serde(with = "exponent")]
    pub r: f64,
    pub eps: f64,
    pub delta: f64,
    pub alpha: u32,
    /// Admissibility order used for the radii.
    pub beta: usize,
    pub grid_size: usize,
    pub seed: u64,
    pub times: Vec<f64>,
    /// Ball radius R and R_φ = (1-ε)R (local checks).
    pub radius: Option<(f64, f64)>,
    /// min R_ε over the grid (global and classical checks).
    pub eta: Option<f64>,
    /// Largest measured |∇^j Rc|, j = 0..=β (classical checks).
    pub ricci_bound: Option<Vec<f64>>,
    /// False when the scenario is outside the classical regime; not a failure.
    pub in_regime: bool,
    pub rows: Vec<EstimateRow>,
    pub fits: Vec<RegimeFit>,
    /// Every cross-solver comparison was within budget.
    pub verified: bool,
    pub pass: bool,
    pub failures: Vec<String>,
}

/// One CSV row per (scenario, p, k, r, t), aggregated over the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub scenario: String,
    pub kind: EstimateKind,
    pub p: usize,
    pub k: usize,
    pub r: String,
    pub t: f64,
    pub regime: Regime,
    pub max_ratio: f64,
    pub max_lhs_over_omega: f64,
    pub shape: f64,
    pub constant: f64,
    pub holds: bool,
}

impl EstimateReport {
    pub fn fit(&self, regime: Regime) -> Option<&RegimeFit> {
        self.fits.iter().find(|f| f.regime == regime)
    }

    pub fn csv_rows(&self) -> Vec<CsvRow> {
        self.times
            .iter()
            .map(|&t| {
                let rows: Vec<&EstimateRow> = self.rows.iter().filter(|row| row.t == t).collect();
                let regime = Regime::of(t);
                let constant = self.fit(regime).map(|f| f.constant).unwrap_or(0.0);
                let max_ratio = rows.iter().map(|row| row.ratio).fold(0.0, f64::max);
                let max_lhs = rows
                    .iter()
                    .filter(|row| row.omega_norm > 0.0)
                    .map(|row| row.lhs / row.omega_norm)
                    .fold(0.0, f64::max);
                CsvRow {
                    scenario: self.scenario.clone(),
                    kind: self.kind,
                    p: self.p,
                    k: self.k,
                    r: exponent::label(self.r),
                    t,
                    regime,
                    max_ratio,
                    max_lhs_over_omega: max_lhs,
                    shape: rows.first().map(|row| row.shape).unwrap_or(0.0),
                    constant,
                    holds: max_ratio <= constant * (1.0 + 1e-12),
                }
            })
            .collect()
    }

    /// (log t, log value) pairs of the corpus-max lhs/‖ω‖, positive values only.
    pub fn plot_points(&self) -> Vec<(f64, f64)> {
        self.csv_rows()
            .iter()
            .filter(|row| row.max_lhs_over_omega > 0.0)
            .map(|row| (row.t.ln(), row.max_lhs_over_omega.ln()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_factor_regimes() {
        assert!((time_factor(0, 0, 0.25, 0.5) - 0.25 / 0.25).abs() < 1e-15);
        assert!((time_factor(1, 2, 0.25, 0.5) - 0.0625 / (0.25 - 0.0625)).abs() < 1e-15);
        assert_eq!(time_factor(0, 1, 0.25, 4.0), 0.5);
        assert_eq!(time_factor(0, 0, 0.25, 4.0), 1.0);
        assert_eq!(time_factor(1, 1, 0.25, 4.0), 1.0);
        // Blows up as t decreases to δ.
        assert!(time_factor(0, 1, 0.25, 0.2501) > 1e3);
    }

    #[test]
    fn short_grid_is_interior() {
        let t = short_times(0.25, 12);
        assert_eq!(t.len(), 12);
        assert!(t[0] > 0.25 && t[11] < 1.0);
        assert!(t.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn infinite_exponent_round_trips() {
        #[derive(Serialize, Deserialize)]
        struct W {
            #[serde(with = "exponent")]
            r: f64,
        }
        let s = serde_json::to_string(&W { r: f64::INFINITY }).unwrap();
        assert_eq!(s, r#"{"r":"inf"}"#);
        assert!(serde_json::from_str::<W>(&s).unwrap().r.is_infinite());
        assert_eq!(serde_json::from_str::<W>(r#"{"r":2.0}"#).unwrap().r, 2.0);
    }
}
