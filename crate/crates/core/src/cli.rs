//! Command-line front end: spec-file parsing and the `analyze`, `density` and
//! `simulate` subcommands. Each command returns the text it would print and
//! an exit status so that it can be exercised without a process boundary.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::ensemble::{EntryLaw, Field, Spike, SpikedModelSpec};
use crate::error::{Error, Result};
use crate::free_additive::AdditiveContext;
use crate::free_multiplicative::MultiplicativeContext;
use crate::measure::{AtomicMeasure, MeasureFile};
use crate::model::Model;
use crate::solve::FixedPointOptions;
use crate::verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_SPEC: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

const DEFAULT_N: usize = 1000;
const DEFAULT_REPS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecKind {
    Additive,
    Multiplicative,
}

/// JSON model description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub kind: SpecKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    pub nu: MeasureFile,
    #[serde(default)]
    pub spikes: Vec<(f64, usize)>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entry_law: Option<EntryLaw>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<Field>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SpecFile {
    /// Validates the description into a model spec; every failure is an [`Error::Spec`].
    pub fn into_spec(self) -> Result<SpikedModelSpec> {
        let spec_err = |e: Error| match e {
            Error::Spec(_) => e,
            other => Error::Spec(other.to_string()),
        };
        let nu = AtomicMeasure::try_from(self.nu).map_err(spec_err)?;
        let model = match self.kind {
            SpecKind::Additive => {
                if self.c.is_some() {
                    return Err(Error::Spec("additive spec takes sigma2, not c".into()));
                }
                let sigma2 = self.sigma2.ok_or_else(|| Error::Spec("additive spec requires sigma2".into()))?;
                Model::Additive(AdditiveContext::new(nu, sigma2).map_err(spec_err)?)
            }
            SpecKind::Multiplicative => {
                if self.sigma2.is_some() {
                    return Err(Error::Spec("multiplicative spec takes c, not sigma2".into()));
                }
                let c = self.c.ok_or_else(|| Error::Spec("multiplicative spec requires c".into()))?;
                Model::Multiplicative(MultiplicativeContext::new(nu, c).map_err(spec_err)?)
            }
        };
        let spikes: Vec<Spike> = self
            .spikes
            .iter()
            .map(|&(theta, multiplicity)| Spike { theta, multiplicity })
            .collect();
        let rank: usize = spikes.iter().map(|s| s.multiplicity).sum();
        let n = self.n.unwrap_or(DEFAULT_N.max(rank));
        Ok(SpikedModelSpec::new(model, spikes, n)?
            .with_entry_law(self.entry_law.unwrap_or_default())
            .with_field(self.field.unwrap_or_default())
            .with_seed(self.seed.unwrap_or(0)))
    }
}

/// Parses a JSON spec file body.
pub fn parse_spec(text: &str) -> Result<SpikedModelSpec> {
    let file: SpecFile = serde_json::from_str(text).map_err(|e| Error::Spec(e.to_string()))?;
    file.into_spec()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// `LO:HI:N` evaluation grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.lo + step * i as f64).collect()
    }
}

impl std::str::FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("grid '{s}' is not of the form LO:HI:N"));
        }
        let lo: f64 = parts[0].parse().map_err(|e| format!("grid lower bound: {e}"))?;
        let hi: f64 = parts[1].parse().map_err(|e| format!("grid upper bound: {e}"))?;
        let points: usize = parts[2].parse().map_err(|e| format!("grid size: {e}"))?;
        if points < 2 {
            return Err("grid needs at least 2 points".into());
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(format!("grid bounds {lo}:{hi} must be finite and increasing"));
        }
        Ok(Self { lo, hi, points })
    }
}

#[derive(Debug, Parser)]
#[command(name = "spikelab", version, about = "Outliers and eigenvector overlaps of spiked random matrices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify the spikes and report outlier locations, overlaps and the limiting support.
    Analyze(RunConfig),
    /// Density of the limiting spectral law on a grid.
    Density(RunConfig),
    /// Monte Carlo verification of the predictions.
    Simulate(RunConfig),
}

#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    /// Model spec (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Density grid `LO:HI:N`.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<Grid>,
    /// Distance to the real axis used for Stieltjes inversion.
    #[arg(long, default_value_t = crate::free_additive::DEFAULT_EPS)]
    pub eps: f64,
    /// Fixed-point residual tolerance.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
}

/// Text output and exit status of a command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Self { code: EXIT_OK, stdout, stderr: String::new() }
    }

    fn fail(code: i32, err: &Error) -> Self {
        Self { code, stdout: String::new(), stderr: format!("error: {err}\n") }
    }
}

pub use crate::verify::fmt_f64;
use crate::verify::fmt_opt;

fn load_spec(config: &RunConfig) -> Result<SpikedModelSpec> {
    let text = std::fs::read_to_string(&config.spec)
        .map_err(|e| Error::Spec(format!("cannot read {}: {e}", config.spec.display())))?;
    let mut spec = parse_spec(&text)?;
    if let Some(n) = config.n {
        spec = spec.with_n(n)?;
    }
    if let Some(seed) = config.seed {
        spec = spec.with_seed(seed);
    }
    Ok(spec)
}

fn spec_error_code(err: &Error) -> i32 {
    match err {
        Error::Spec(_) | Error::Measure(_) | Error::Domain(_) => EXIT_SPEC,
        _ => EXIT_FAILURE,
    }
}

/// `analyze`: one row per spike plus the support of the limiting law.
pub fn analyze(config: &RunConfig) -> Outcome {
    let spec = match load_spec(config) {
        Ok(s) => s,
        Err(e) => return Outcome::fail(spec_error_code(&e), &e),
    };
    let spikes: Vec<(f64, usize)> = spec.spikes().iter().map(|s| (s.theta, s.multiplicity)).collect();
    let report = match spec.model().report(&spikes) {
        Ok(r) => r,
        Err(e) => return Outcome::fail(spec_error_code(&e), &e),
    };
    match config.format.unwrap_or(Format::Json) {
        Format::Json => Outcome::ok(to_json(&report)),
        Format::Csv => {
            let mut out = String::from("record,theta,multiplicity,verdict,criterion,rho,tau,lo,hi\n");
            for v in &report.verdicts {
                let verdict = if v.is_outlier { "outlier" } else { "sticking" };
                let _ = writeln!(
                    out,
                    "spike,{},{},{verdict},{},{},{},,",
                    fmt_f64(v.theta),
                    v.multiplicity,
                    fmt_f64(v.criterion_value),
                    fmt_opt(v.rho),
                    fmt_opt(v.tau)
                );
            }
            for &(lo, hi) in &report.support.intervals {
                let _ = writeln!(out, "support,,,,,,,{},{}", fmt_f64(lo), fmt_f64(hi));
            }
            if let Some(m) = report.mass_at_zero {
                let _ = writeln!(out, "mass_at_zero,,,,{},,,,", fmt_f64(m));
            }
            Outcome::ok(out)
        }
    }
}

/// `density`: `x,density` rows on the requested grid.
pub fn density(config: &RunConfig) -> Outcome {
    let spec = match load_spec(config) {
        Ok(s) => s,
        Err(e) => return Outcome::fail(spec_error_code(&e), &e),
    };
    let Some(grid) = config.grid else {
        return Outcome::fail(EXIT_SPEC, &Error::Spec("density requires --grid LO:HI:N".into()));
    };
    let opts = FixedPointOptions::default().with_tol(config.tol);
    let rows = match spec.model().density(&grid.points(), config.eps, &opts) {
        Ok(rows) => rows,
        Err(e) if e.is_convergence() => return Outcome::fail(EXIT_CONVERGENCE, &e),
        Err(e) => return Outcome::fail(spec_error_code(&e), &e),
    };
    match config.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut out = String::from("x,density\n");
            for (x, f) in rows {
                let _ = writeln!(out, "{},{}", fmt_f64(x), fmt_f64(f));
            }
            Outcome::ok(out)
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Row {
                x: f64,
                density: f64,
            }
            let rows: Vec<Row> = rows.into_iter().map(|(x, density)| Row { x, density }).collect();
            Outcome::ok(to_json(&rows))
        }
    }
}

/// `simulate`: Monte Carlo verification, reported whether or not the checks pass.
pub fn simulate(config: &RunConfig) -> Outcome {
    let spec = match load_spec(config) {
        Ok(s) => s,
        Err(e) => return Outcome::fail(spec_error_code(&e), &e),
    };
    let reps = config.reps.unwrap_or(DEFAULT_REPS);
    if reps == 0 {
        return Outcome::fail(EXIT_SPEC, &Error::Spec("--reps must be positive".into()));
    }
    let result = match verify::run(&spec, reps) {
        Ok(r) => r,
        Err(e @ Error::Theory(_)) => return Outcome::fail(EXIT_SPEC, &e),
        Err(e) => return Outcome::fail(EXIT_NUMERICAL, &e),
    };
    match config.format.unwrap_or(Format::Json) {
        Format::Json => Outcome::ok(to_json(&result)),
        Format::Csv => Outcome::ok(verify::to_csv(std::slice::from_ref(&result))),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// Runs a parsed command line, writing to `--out` when given.
pub fn execute(cli: &Cli) -> Outcome {
    let (config, outcome) = match &cli.command {
        Command::Analyze(c) => (c, analyze(c)),
        Command::Density(c) => (c, density(c)),
        Command::Simulate(c) => (c, simulate(c)),
    };
    match (&config.out, outcome.code) {
        (Some(path), EXIT_OK) => match std::fs::write(path, &outcome.stdout) {
            Ok(()) => Outcome::ok(String::new()),
            Err(e) => Outcome::fail(EXIT_FAILURE, &Error::Io(e)),
        },
        _ => outcome,
    }
}
