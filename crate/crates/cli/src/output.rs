//! Artifact writers. Every file starts with the artifact version, the
//! scenario hash and the echoed scenario.

use heatforms_core::{Scenario, ARTIFACT_VERSION};
use serde_json::{json, Value};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Provenance stamped into every artifact.
#[derive(Debug, Clone)]
pub struct Stamp {
    pub command: String,
    pub scenario_hash: String,
    pub scenario: Value,
    pub seed: Option<u64>,
}

impl Stamp {
    pub fn new(command: &str, scenario: Option<&Scenario>, seed: Option<u64>) -> Self {
        Stamp {
            command: command.into(),
            scenario_hash: scenario.map(|s| s.hash()).unwrap_or_else(|| "none".into()),
            scenario: scenario.map(|s| serde_json::to_value(s).expect("scenario serializes")).unwrap_or(Value::Null),
            seed,
        }
    }

    fn comment_lines(&self) -> String {
        let mut s = format!("# artifact_version={ARTIFACT_VERSION}\n# command={}\n# scenario_hash={}\n", self.command, self.scenario_hash);
        if let Some(seed) = self.seed {
            s += &format!("# seed={seed}\n");
        }
        s += &format!("# scenario={}\n", serde_json::to_string(&self.scenario).expect("json value serializes"));
        s
    }
}

/// A CSV table given as header plus rows of string cells.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|h| h.to_string()).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    /// Rows from any serializable records, header taken from the first.
    pub fn from_records<T: serde::Serialize>(records: &[T]) -> std::io::Result<Self> {
        let mut w = csv::Writer::from_writer(vec![]);
        for r in records {
            w.serialize(r).map_err(std::io::Error::other)?;
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes.as_slice());
        let header = rd.headers().map_err(std::io::Error::other)?.iter().map(String::from).collect();
        let rows = rd
            .records()
            .map(|r| r.map(|r| r.iter().map(String::from).collect()))
            .collect::<Result<_, _>>()
            .map_err(std::io::Error::other)?;
        Ok(Table { header, rows })
    }
}

/// Two-column plot data (log t, log value).
#[derive(Debug, Clone)]
pub struct PlotData {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

pub struct Writer {
    pub dir: PathBuf,
    pub stamp: Stamp,
    pub written: Vec<PathBuf>,
}

impl Writer {
    pub fn new(dir: &Path, stamp: Stamp) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Writer { dir: dir.to_path_buf(), stamp, written: vec![] })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    pub fn json(&mut self, name: &str, pass: bool, failures: &[String], result: Value) -> std::io::Result<()> {
        let doc = json!({
            "artifact_version": ARTIFACT_VERSION,
            "command": self.stamp.command,
            "scenario_hash": self.stamp.scenario_hash,
            "seed": self.stamp.seed,
            "scenario": self.stamp.scenario,
            "pass": pass,
            "failures": failures,
            "result": result,
        });
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(&doc).map_err(std::io::Error::other)?;
        text.push('\n');
        fs::write(path, text)
    }

    pub fn csv(&mut self, name: &str, table: &Table) -> std::io::Result<()> {
        let mut buf = self.stamp.comment_lines().into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(&table.header).map_err(std::io::Error::other)?;
            for r in &table.rows {
                w.write_record(r).map_err(std::io::Error::other)?;
            }
            w.flush()?;
        }
        let path = self.path(name);
        fs::write(path, buf)
    }

    pub fn dat(&mut self, plot: &PlotData) -> std::io::Result<()> {
        let mut buf = self.stamp.comment_lines().into_bytes();
        writeln!(buf, "# log_t log_value")?;
        for (x, y) in &plot.points {
            writeln!(buf, "{x:.12e} {y:.12e}")?;
        }
        let path = self.path(&format!("{}.dat", plot.name));
        fs::write(path, buf)
    }
}
