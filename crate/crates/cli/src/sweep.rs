//! Depth and width sweeps: train, audit, tabulate, fit slopes.

use std::path::Path;

use anyhow::{anyhow, Context};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use pacnr::data::Dataset;
use pacnr::linalg::RngStream;

use crate::checkpoint::Checkpoint;
use crate::commands::train_on;
use crate::config::{load_splits, DataSpec, InitName, NetworkSpec, OptimizerName, RunConfig, TrainSpec};
use crate::error::{CliError, CliResult};
use crate::plot::{log10_slope, LinearFit};
use crate::report::{audit, fmt_f64, write_csv, Audit, RowOptions, CORE_B_COLUMNS};

const SEED_STREAM: u64 = 0x0073_7765_6570;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Depth,
    Width,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Depth => "depth",
            Axis::Width => "width",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<usize>,
    /// The width when sweeping depth, the depth when sweeping width.
    pub fixed: usize,
    #[serde(default = "one")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "ten")]
    pub gamma_class: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub init: InitName,
    #[serde(default)]
    pub figure_mode: bool,
    #[serde(default)]
    pub loose: bool,
    pub data: DataSpec,
    #[serde(default)]
    pub train: TrainSpec,
}

fn one() -> usize {
    1
}
fn ten() -> f64 {
    10.0
}
fn default_delta() -> f64 {
    0.01
}

pub const PRESETS: [&str; 5] = ["h40-depth", "h1280-depth", "width-d8", "width-d14", "d28-adam"];

impl SweepSpec {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let spec: SweepSpec = toml::from_str(&text).with_context(|| format!("invalid sweep spec {}", path.display()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Experiment presets: SGD at 0.1 with batch 64 on 4096 MNIST points,
    /// stopping at 99% of points with margin 10; depth 28 switches to Adam.
    pub fn preset(name: &str) -> Option<Self> {
        let widths = vec![40, 80, 160, 320, 640, 1280];
        let (axis, values, fixed, runs) = match name {
            "h40-depth" => (Axis::Depth, (2..=11).collect(), 40, 1),
            "h1280-depth" => (Axis::Depth, (2..=11).collect(), 1280, 1),
            "width-d8" => (Axis::Width, widths, 8, 1),
            "width-d14" => (Axis::Width, widths, 14, 1),
            "d28-adam" => (Axis::Depth, vec![28], 40, 12),
            _ => return None,
        };
        Some(Self {
            axis,
            values,
            fixed,
            runs,
            seed: 0,
            gamma_class: 10.0,
            delta: 0.01,
            init: InitName::InvSqrtFanIn,
            figure_mode: true,
            loose: false,
            data: DataSpec::mnist(4096),
            train: TrainSpec {
                optimizer: OptimizerName::Auto,
                ..Default::default()
            },
        })
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::usage(anyhow!(msg)));
        if self.values.is_empty() || self.values.contains(&0) {
            return bad(format!("sweep values must be nonempty and positive, got {:?}", self.values));
        }
        if self.fixed == 0 || self.runs == 0 {
            return bad("fixed and runs must be positive".into());
        }
        if self.axis == Axis::Depth && self.values.iter().any(|&d| d < 2) {
            return bad("depth values must be at least 2".into());
        }
        if self.axis == Axis::Width && self.fixed < 2 {
            return bad("fixed depth must be at least 2".into());
        }
        if !(self.gamma_class > 0.0) || !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("need gamma_class > 0 and delta in (0, 1), got {} and {}", self.gamma_class, self.delta));
        }
        Ok(())
    }

    fn depth_width(&self, value: usize) -> (usize, usize) {
        match self.axis {
            Axis::Depth => (value, self.fixed),
            Axis::Width => (self.fixed, value),
        }
    }

    /// Seed of run `run` at axis value `value`; independent of scheduling.
    pub fn run_seed(&self, value: usize, run: usize) -> u64 {
        RngStream::new(self.seed, SEED_STREAM)
            .derive(value as u64)
            .derive(run as u64)
            .next_u64()
    }

    fn run_config(&self, value: usize, run: usize) -> RunConfig {
        let (depth, width) = self.depth_width(value);
        RunConfig {
            seed: self.run_seed(value, run),
            network: NetworkSpec { depth, width, init: self.init },
            data: DataSpec {
                // Every run trains on the same sample.
                sample_seed: Some(self.data.sample_seed.unwrap_or(self.seed)),
                ..self.data.clone()
            },
            train: self.train.clone(),
        }
    }

    pub fn row_options(&self) -> RowOptions {
        RowOptions {
            loose: self.loose,
            figure_mode: self.figure_mode,
        }
    }
}

pub struct SweepRow {
    pub value: usize,
    pub run: usize,
    pub seed: u64,
    pub outcome: Result<(Checkpoint, Audit), String>,
}

pub struct SlopeRow {
    pub column: String,
    pub fit: Option<LinearFit>,
}

pub struct SweepOutcome {
    pub header: Vec<String>,
    pub rows: Vec<SweepRow>,
    pub table: Vec<Vec<String>>,
    pub slopes: Vec<SlopeRow>,
}

impl SweepOutcome {
    pub fn slope(&self, column: &str) -> Option<LinearFit> {
        self.slopes.iter().find(|s| s.column == column).and_then(|s| s.fit)
    }
}

const PREFIX: [&str; 8] = ["axis", "value", "run", "seed", "status", "epochs_run", "converged", "final_margin_accuracy"];

/// Max of the four B-terms compared against the spectral term.
pub const CORE_B_MAX: &str = "B_core_max";

/// Runs every (value, run) job, in parallel, and tabulates them sorted by
/// (value, run). A failing job becomes a row with its error in `status`.
pub fn run_sweep(spec: &SweepSpec, data_dir: &Path) -> CliResult<SweepOutcome> {
    spec.validate()?;
    let (train, test) = load_splits(&spec.run_config(spec.values[0], 0).data, spec.seed, data_dir)?;
    let mut jobs: Vec<(usize, usize)> = spec
        .values
        .iter()
        .flat_map(|&v| (0..spec.runs).map(move |r| (v, r)))
        .collect();
    jobs.sort_unstable();
    jobs.dedup();
    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(value, run)| {
            let cfg = spec.run_config(value, run);
            let outcome = run_one(&cfg, spec, &train, test.as_ref()).map_err(|e| format!("{e}"));
            match &outcome {
                Ok((ck, a)) => info!(
                    "{}={value} run {run}: epochs {} converged {} bound {:.4e}",
                    spec.axis.name(),
                    ck.meta.epochs_run,
                    ck.meta.converged,
                    a.report.final_bound
                ),
                Err(e) => warn!("{}={value} run {run} failed: {e}", spec.axis.name()),
            }
            SweepRow {
                value,
                run,
                seed: cfg.seed,
                outcome,
            }
        })
        .collect();

    let opts = spec.row_options();
    let audit_header = opts.header();
    let header: Vec<String> = PREFIX.iter().chain(&audit_header).map(|s| s.to_string()).collect();
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![spec.axis.name().to_string(), r.value.to_string(), r.run.to_string(), r.seed.to_string()];
            match &r.outcome {
                Ok((ck, a)) => {
                    row.push("ok".into());
                    row.push(ck.meta.epochs_run.to_string());
                    row.push(ck.meta.converged.to_string());
                    row.push(fmt_f64(ck.meta.final_margin_accuracy));
                    row.extend(a.values(opts));
                }
                Err(e) => {
                    row.push(format!("error: {e}"));
                    row.resize(header.len(), String::new());
                }
            }
            row
        })
        .collect();

    let slopes = fit_slopes(&header, &table);
    Ok(SweepOutcome {
        header,
        rows,
        table,
        slopes,
    })
}

fn run_one(cfg: &RunConfig, spec: &SweepSpec, train: &Dataset, test: Option<&Dataset>) -> CliResult<(Checkpoint, Audit)> {
    let ck = train_on(cfg, train)?;
    let a = audit(&ck.params, train, test, spec.gamma_class, spec.delta)?;
    Ok((ck, a))
}

/// Columns whose growth along the axis is summarized.
fn slope_columns(header: &[String]) -> Vec<String> {
    let numeric = |h: &str| {
        h.starts_with("B_")
            || h.starts_with("our_bound")
            || matches!(h, "sigma_star" | "sigma_star_loose" | "kl" | "neyshabur18" | "bartlett17" | "spectral_term")
    };
    let mut cols: Vec<String> = header.iter().filter(|h| numeric(h)).cloned().collect();
    cols.push(CORE_B_MAX.into());
    cols
}

fn fit_slopes(header: &[String], table: &[Vec<String>]) -> Vec<SlopeRow> {
    let col = |name: &str| header.iter().position(|h| h == name);
    let value_col = col("value").expect("value column");
    let num = |row: &Vec<String>, i: usize| row[i].parse::<f64>().ok();
    slope_columns(header)
        .into_iter()
        .map(|name| {
            let points: Vec<(f64, f64)> = table
                .iter()
                .filter(|r| r[4] == "ok")
                .filter_map(|r| {
                    let x = num(r, value_col)?;
                    let y = if name == CORE_B_MAX {
                        CORE_B_COLUMNS
                            .iter()
                            .map(|c| num(r, col(c).expect("core column")))
                            .try_fold(f64::NEG_INFINITY, |m, v| v.map(|v| m.max(v)))?
                    } else {
                        num(r, col(&name)?)?
                    };
                    Some((x, y))
                })
                .collect();
            SlopeRow {
                column: name,
                fit: log10_slope(&points),
            }
        })
        .collect()
}

/// Writes `results.csv` and `slopes.csv` under `dir`.
pub fn write_outcome(outcome: &SweepOutcome, dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let header: Vec<&str> = outcome.header.iter().map(String::as_str).collect();
    write_csv(&dir.join("results.csv"), &header, &outcome.table)?;
    let rows: Vec<Vec<String>> = outcome
        .slopes
        .iter()
        .map(|s| match s.fit {
            Some(f) => vec![
                s.column.clone(),
                fmt_f64(f.slope),
                fmt_f64(f.intercept),
                f.points.to_string(),
                fmt_f64(10f64.powf(f.slope)),
            ],
            None => vec![s.column.clone(), String::new(), String::new(), "0".into(), String::new()],
        })
        .collect();
    write_csv(
        &dir.join("slopes.csv"),
        &["column", "log10_slope", "intercept", "points", "growth_per_step"],
        &rows,
    )
}
