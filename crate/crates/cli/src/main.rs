//! Scenario-driven front end for the heat-estimate checks.
//!
//! Exit codes: 0 pass, 1 assertion failure, 2 usage error, 3 numerical refusal.

mod commands;
mod output;

use clap::{Args, Parser, Subcommand};
use commands::{CliError, CliResult, Outcome};
use heatforms_core::Scenario;
use output::{Stamp, Writer};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "heatforms", version, about = "Heat semigroup estimate checks on chart metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory (defaults to the scenario's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for random corpus elements (defaults to the scenario's seed).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Kernel norm scaling exponent and unit mass.
    KernelCheck {
        #[arg(long)]
        n: usize,
        /// Lebesgue exponent; "inf" allowed.
        #[arg(long, value_parser = parse_r)]
        r: f64,
        /// Derivative multi-index, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        gamma: Vec<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Admissible-radius field with Lipschitz and slow-variation checks.
    Radius(Common),
    /// Vitali covering by admissible balls and its overlap bound.
    Cover(Common),
    /// Truncated Duhamel series against the direct solver.
    DuhamelCompare(Common),
    LocalCheck(Common),
    GlobalCheck(Common),
    ClassicalCheck(Common),
    /// Every scenario check, plus the L² contraction check.
    Sweep(Common),
}

fn parse_r(s: &str) -> Result<f64, String> {
    if s == "inf" {
        return Ok(f64::INFINITY);
    }
    let r: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if r >= 1.0 {
        Ok(r)
    } else {
        Err("r must be at least 1".into())
    }
}

type Runner = fn(&mut Writer, &Scenario) -> CliResult<Outcome>;

fn with_scenario(name: &str, c: &Common, run: Runner) -> CliResult<(Outcome, PathBuf)> {
    let mut s = Scenario::load(&c.scenario)?;
    if let Some(seed) = c.seed {
        s.seed = seed;
    }
    let dir = c.out.clone().unwrap_or_else(|| s.output_dir.clone());
    let mut w = Writer::new(&dir, Stamp::new(name, Some(&s), Some(s.seed)))?;
    Ok((run(&mut w, &s)?, dir))
}

fn run(cli: Cli) -> CliResult<(Outcome, PathBuf)> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match &cli.command {
        Command::KernelCheck { n, r, gamma, out } => {
            let mut w = Writer::new(out, Stamp::new("kernel-check", None, None))?;
            Ok((commands::kernel_check(&mut w, *n, *r, gamma)?, out.clone()))
        }
        Command::Radius(c) => with_scenario("radius", c, commands::radius),
        Command::Cover(c) => with_scenario("cover", c, commands::cover),
        Command::DuhamelCompare(c) => with_scenario("duhamel-compare", c, commands::duhamel_compare),
        Command::LocalCheck(c) => with_scenario("local-check", c, commands::local_check),
        Command::GlobalCheck(c) => with_scenario("global-check", c, commands::global_check),
        Command::ClassicalCheck(c) => with_scenario("classical-check", c, commands::classical_check),
        Command::Sweep(c) => with_scenario("sweep", c, commands::sweep),
    }
}

fn failure_doc(code: i32, failures: &[String]) -> String {
    serde_json::json!({"exit_code": code, "failures": failures}).to_string()
}

fn write_failures(dir: &Path, doc: &str) {
    // Best effort: the directory may not exist after a usage error.
    let _ = std::fs::write(dir.join("failures.json"), format!("{doc}\n"));
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok((out, dir)) if out.pass() => {
            let _ = std::fs::remove_file(dir.join("failures.json"));
            println!("PASS");
            ExitCode::SUCCESS
        }
        Ok((out, dir_fail)) => {
            let code = if out.failures.is_empty() { 3 } else { 1 };
            let mut listed = out.failures.clone();
            listed.extend(out.refusals.iter().map(|r| format!("refused {r}")));
            let doc = failure_doc(code, &listed);
            write_failures(&dir_fail, &doc);
            eprintln!("{doc}");
            println!("FAIL");
            ExitCode::from(code as u8)
        }
        Err(e) => {
            let doc = failure_doc(e.exit_code(), &[e.message().to_string()]);
            eprintln!("{doc}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
