//! Scenario files: which metric, grid and parameters a run uses.

use crate::covering::{DEFAULT_DILATION, DEFAULT_DIVISOR};
use crate::error::{Error, Result};
use crate::estimates::{exponent, log_space, short_times, EstimateConfig, DEFAULT_SEED};
use crate::metric_charts::{flat_torus, perturbed_euclidean, sphere_chart, ChartMetric, Domain, ExprMetric};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// An L^r exponent; `"inf"` in JSON for r = ∞.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponent(pub f64);

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        exponent::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        exponent::deserialize(d).map(Exponent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "builtin", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Builtin {
    FlatTorus {
        #[serde(default = "two")]
        dim: usize,
    },
    SphereChart,
    PerturbedEuclidean {
        amplitude: f64,
        #[serde(default = "one")]
        frequency: f64,
    },
}

fn two() -> usize {
    2
}
fn one() -> f64 {
    1.0
}

/// Metric as a builtin, an inline expression table, or a file holding one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricSpec {
    Builtin(Builtin),
    Table { domain: Domain, table: Vec<Vec<String>> },
    File { file: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    #[serde(default = "twelve")]
    pub short_count: usize,
    #[serde(default = "twenty")]
    pub long_max: f64,
    #[serde(default = "twelve")]
    pub long_count: usize,
}

fn twelve() -> usize {
    12
}
fn twenty() -> f64 {
    20.0
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid { short_count: 12, long_max: 20.0, long_count: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub metric: MetricSpec,
    /// Grid points per axis.
    pub resolution: usize,
    /// Coarse resolution for the refinement-stability check; none skips it.
    #[serde(default)]
    pub coarse_resolution: Option<usize>,
    #[serde(default = "default_p")]
    pub p: Vec<usize>,
    #[serde(default = "default_k")]
    pub k: Vec<usize>,
    #[serde(default = "default_r")]
    pub r: Vec<Exponent>,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Duhamel truncation order J.
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default)]
    pub times: TimeGrid,
    /// Times for the Duhamel-versus-direct comparison.
    #[serde(default = "default_compare")]
    pub compare_times: Vec<f64>,
    #[serde(default = "default_divisor")]
    pub divisor: f64,
    #[serde(default = "default_dilation")]
    pub dilation: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
}

fn default_p() -> Vec<usize> {
    vec![0, 1]
}
fn default_k() -> Vec<usize> {
    vec![0, 1, 2]
}
fn default_r() -> Vec<Exponent> {
    vec![Exponent(1.0), Exponent(2.0), Exponent(f64::INFINITY)]
}
fn default_eps() -> f64 {
    0.05
}
fn default_delta() -> f64 {
    0.25
}
fn default_order() -> usize {
    3
}
fn default_nodes() -> usize {
    32
}
fn default_compare() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}
fn default_divisor() -> f64 {
    DEFAULT_DIVISOR
}
fn default_dilation() -> f64 {
    DEFAULT_DILATION
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn invalid(path: &str, msg: impl Into<String>) -> Error {
    Error::Scenario { path: path.into(), msg: msg.into() }
}

impl Scenario {
    /// Parse JSON, reporting the failing field path on schema errors.
    pub fn from_json(src: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(src);
        let s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| invalid(&e.path().to_string(), e.inner().to_string()))?;
        s.validate()?;
        Ok(s)
    }

    /// Load from disk; a metric file path is resolved against the scenario's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path).map_err(|e| invalid(".", format!("{}: {e}", path.display())))?;
        let mut s = Self::from_json(&src)?;
        if let MetricSpec::File { file } = &s.metric {
            if file.is_relative() {
                if let Some(dir) = path.parent() {
                    s.metric = MetricSpec::File { file: dir.join(file) };
                }
            }
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(invalid("name", "must be nonempty"));
        }
        if !(8..=64).contains(&self.resolution) {
            return Err(invalid("resolution", format!("must lie in [8, 64], got {}", self.resolution)));
        }
        if let Some(c) = self.coarse_resolution {
            if !(8..=64).contains(&c) || c >= self.resolution {
                return Err(invalid("coarse_resolution", format!("must lie in [8, resolution), got {c}")));
            }
        }
        if !(self.eps > 0.0 && self.eps <= 0.2) {
            return Err(invalid("eps", format!("must lie in (0, 0.2], got {}", self.eps)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid("delta", format!("must lie in (0, 1), got {}", self.delta)));
        }
        if self.p.is_empty() || self.k.is_empty() || self.r.is_empty() {
            return Err(invalid("p", "p, k and r lists must be nonempty"));
        }
        if let Some(i) = self.k.iter().position(|&k| k > 3) {
            return Err(invalid(&format!("k[{i}]"), "derivative orders above 3 are unsupported"));
        }
        if let Some(i) = self.r.iter().position(|r| !(r.0 >= 1.0)) {
            return Err(invalid(&format!("r[{i}]"), "exponents must be at least 1"));
        }
        if self.order == 0 || self.nodes == 0 {
            return Err(invalid("order", "order and nodes must be positive"));
        }
        let t = &self.times;
        if t.short_count == 0 || t.long_count < 2 || !(t.long_max > 1.0) {
            return Err(invalid("times", "need short_count >= 1, long_count >= 2 and long_max > 1"));
        }
        if let Some(i) = self.compare_times.iter().position(|&t| !(t > 0.0 && t.is_finite())) {
            return Err(invalid(&format!("compare_times[{i}]"), "times must be positive"));
        }
        if !(self.divisor > 0.0) || !(self.dilation >= 1.0) {
            return Err(invalid("divisor", "divisor must be positive and dilation at least 1"));
        }
        if let MetricSpec::Builtin(Builtin::PerturbedEuclidean { frequency, amplitude }) = &self.metric {
            if frequency.fract() != 0.0 || *frequency < 1.0 {
                return Err(invalid("metric.frequency", "must be a positive integer to stay periodic"));
            }
            if !amplitude.is_finite() || amplitude.abs() >= 0.5 {
                return Err(invalid("metric.amplitude", "must satisfy |A| < 0.5"));
            }
        }
        if let MetricSpec::Builtin(Builtin::FlatTorus { dim }) = &self.metric {
            if !(1..=3).contains(dim) {
                return Err(invalid("metric.dim", "must be 1, 2 or 3"));
            }
        }
        Ok(())
    }

    pub fn metric(&self) -> Result<ExprMetric> {
        let m = match &self.metric {
            MetricSpec::Builtin(Builtin::FlatTorus { dim }) => flat_torus(*dim),
            MetricSpec::Builtin(Builtin::SphereChart) => sphere_chart(),
            MetricSpec::Builtin(Builtin::PerturbedEuclidean { amplitude, frequency }) => perturbed_euclidean(*amplitude, *frequency),
            MetricSpec::Table { domain, table } => ExprMetric::new(domain.clone(), table).map_err(|e| invalid("metric.table", e.to_string()))?,
            MetricSpec::File { file } => {
                let src = std::fs::read_to_string(file).map_err(|e| invalid("metric.file", format!("{}: {e}", file.display())))?;
                #[derive(Deserialize)]
                #[serde(deny_unknown_fields)]
                struct Table {
                    domain: Domain,
                    table: Vec<Vec<String>>,
                }
                let de = &mut serde_json::Deserializer::from_str(&src);
                let t: Table = serde_path_to_error::deserialize(de)
                    .map_err(|e| invalid(&format!("metric.file/{}", e.path()), e.inner().to_string()))?;
                ExprMetric::new(t.domain, &t.table).map_err(|e| invalid("metric.file", e.to_string()))?
            }
        };
        if let Some(i) = self.p.iter().position(|&p| p > m.dim()) {
            return Err(invalid(&format!("p[{i}]"), format!("form degree exceeds dimension {}", m.dim())));
        }
        Ok(m)
    }

    /// Lowercase hex SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn rs(&self) -> Vec<f64> {
        self.r.iter().map(|r| r.0).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        match self.coarse_resolution {
            Some(c) => vec![c, self.resolution],
            None => vec![self.resolution],
        }
    }

    pub fn estimate_config(&self, p: usize) -> EstimateConfig {
        EstimateConfig {
            scenario: self.name.clone(),
            p,
            ks: self.k.clone(),
            rs: self.rs(),
            eps: self.eps,
            delta: self.delta,
            short_times: short_times(self.delta, self.times.short_count),
            long_times: log_space(1.0, self.times.long_max, self.times.long_count),
            sizes: self.sizes(),
            seed: self.seed,
            order: self.order.min(2),
            nodes: self.nodes.min(16),
            ..EstimateConfig::new(&self.name, p)
        }
    }
}

/// The three shipped scenarios.
pub fn builtin_scenarios() -> Vec<Scenario> {
    let base = |name: &str, metric: Builtin| Scenario {
        name: name.into(),
        metric: MetricSpec::Builtin(metric),
        resolution: 32,
        coarse_resolution: Some(16),
        p: default_p(),
        k: default_k(),
        r: default_r(),
        eps: default_eps(),
        delta: default_delta(),
        order: default_order(),
        nodes: default_nodes(),
        times: TimeGrid::default(),
        compare_times: default_compare(),
        divisor: default_divisor(),
        dilation: default_dilation(),
        seed: default_seed(),
        output_dir: PathBuf::from("out").join(name),
    };
    vec![
        base("flat-torus", Builtin::FlatTorus { dim: 2 }),
        base("sphere-chart", Builtin::SphereChart),
        base("perturbed", Builtin::PerturbedEuclidean { amplitude: 0.03, frequency: 1.0 }),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_fills_defaults() {
        let s = Scenario::from_json(r#"{"name":"t","metric":{"builtin":"flat-torus"},"resolution":16}"#).unwrap();
        assert_eq!(s.eps, 0.05);
        assert_eq!(s.divisor, 120.0);
        assert!(s.rs()[2].is_infinite());
        assert_eq!(s.metric().unwrap().dim(), 2);
    }

    #[test]
    fn schema_path_in_errors() {
        let e = Scenario::from_json(r#"{"name":"t","metric":{"builtin":"flat-torus"},"resolution":16,"r":[1,"x"]}"#).unwrap_err();
        match e {
            Error::Scenario { path, .. } => assert!(path.starts_with("r"), "{path}"),
            other => panic!("{other:?}"),
        }
        let e = Scenario::from_json(r#"{"name":"t","metric":{"builtin":"flat-torus"},"resolution":4}"#).unwrap_err();
        assert!(matches!(e, Error::Scenario { ref path, .. } if path == "resolution"));
        let e = Scenario::from_json(r#"{"name":"t","metric":{"builtin":"flat-torus"},"resolution":16,"eps":0.3}"#).unwrap_err();
        assert!(matches!(e, Error::Scenario { ref path, .. } if path == "eps"));
        let e = Scenario::from_json(r#"{"name":"t","metric":{"builtin":"flat-torus"},"resolution":16,"bogus":1}"#).unwrap_err();
        assert!(matches!(e, Error::Scenario { .. }));
    }

    #[test]
    fn inline_table_metric() {
        let s = Scenario::from_json(
            r#"{"name":"t","resolution":16,"metric":{"domain":{"lo":[0,0],"hi":[1,1],"periodic":false},"table":[["1","0"],["0","1+x1"]]}}"#,
        )
        .unwrap();
        let m = s.metric().unwrap();
        assert_eq!(m.g(&[0.5, 0.5])[(1, 1)], 1.5);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = builtin_scenarios().remove(2);
        let b = Scenario::from_json(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let mut c = a.clone();
        c.seed = 7;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn builtins_validate() {
        for s in builtin_scenarios() {
            s.validate().unwrap();
            s.metric().unwrap();
        }
    }
}
