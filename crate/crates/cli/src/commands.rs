//! The subcommands, callable without going through argument parsing.

use std::path::PathBuf;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use pacnr::data::Dataset;
use pacnr::network::init_network;
use pacnr::trainer::train;

use crate::checkpoint::Checkpoint;
use crate::config::{load_splits, resolve_data_dir, RunConfig};
use crate::error::{CliError, CliResult};
use crate::plot::{read_series, render_svg};
use crate::report::{audit, write_archive, write_csv, RowOptions};
use crate::sweep::{run_sweep, write_outcome, SweepSpec, PRESETS};
use crate::verify::{run_noise_check, NoiseCheck, COLUMNS as NOISE_COLUMNS, DEFAULT_RATIOS};

#[derive(Parser, Debug)]
#[command(name = "pacnr", version, about = "Noise-resilience generalization bounds for ReLU networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a network from a TOML config and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate every bound on a checkpoint's training set; one CSV row.
    Audit(AuditArgs),
    /// Train and audit networks across depths or widths.
    Sweep(SweepArgs),
    /// Monte Carlo check of the perturbation tolerances on a checkpoint.
    VerifyNoise(VerifyArgs),
    /// Plot log10 of CSV columns against an axis column as SVG.
    Plot(PlotArgs),
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Directory holding train-images-idx3-ubyte[.gz] and
    /// train-labels-idx1-ubyte[.gz].
    #[arg(long, env = "PACNR_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Overrides `seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `train.max_epochs` in the config.
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Append the loose Jacobian variant's B-term and σ*.
    #[arg(long)]
    pub loose: bool,
    /// Failure probability of the bound.
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    /// Classification margin; defaults to the checkpoint's stopping margin,
    /// or 10 when that is 0.
    #[arg(long)]
    pub gamma_class: Option<f64>,
    /// Append normalized bounds for cross-depth comparison.
    #[arg(long)]
    pub figure_mode: bool,
    /// Held-out points to measure test error on (overrides the checkpoint).
    #[arg(long)]
    pub test_m: Option<usize>,
    /// Also write per-input properties of the training set here.
    #[arg(long)]
    pub archive: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Sweep spec TOML.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub spec: Option<PathBuf>,
    /// One of h40-depth, h1280-depth, width-d8, width-d14, d28-adam.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Training points.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write every trained network to `<out-dir>/checkpoints/`.
    #[arg(long)]
    pub keep_checkpoints: bool,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Absolute σ values; default is σ* times 1/4, 1/2, 1 and 2.
    #[arg(long, value_delimiter = ',')]
    pub sigma_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 2000)]
    pub trials: usize,
    /// Training points checked statement by statement.
    #[arg(long, default_value_t = 1)]
    pub points: usize,
    /// Noise draws per point for the resilient-fraction estimate (0 skips).
    #[arg(long, default_value_t = 100)]
    pub mu_noise: usize,
    /// Training points for the resilient-fraction estimate (0 means all).
    #[arg(long, default_value_t = 0)]
    pub mu_points: usize,
    #[arg(long)]
    pub gamma_class: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    #[arg(long)]
    pub csv: PathBuf,
    /// Columns to plot, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub columns: Vec<String>,
    /// Horizontal axis column (sweep output uses `value`).
    #[arg(long, default_value = "value")]
    pub x: String,
    #[arg(long, short)]
    pub out: PathBuf,
}

/// Runs a parsed command line; the `Ok` value is the exit code.
pub fn run(cli: Cli) -> CliResult<u8> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Audit(a) => cmd_audit(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::VerifyNoise(a) => cmd_verify_noise(&a),
        Command::Plot(a) => cmd_plot(&a),
    }
}

/// Initializes and trains the network `cfg` describes on `data`.
pub fn train_on(cfg: &RunConfig, data: &Dataset) -> CliResult<Checkpoint> {
    let mut dims = vec![data.input_dim];
    dims.extend(std::iter::repeat(cfg.network.width).take(cfg.network.depth - 1));
    dims.push(data.num_classes);
    let params = init_network(&dims, cfg.network.init.into(), &mut cfg.init_rng())?;
    let tc = cfg.train_config();
    let result = train(params, &data.examples, &tc)?;
    Ok(Checkpoint::from_training(cfg, &tc, result))
}

pub fn cmd_train(a: &TrainArgs) -> CliResult<u8> {
    let mut cfg = RunConfig::from_file(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.max_epochs {
        cfg.train.max_epochs = Some(e);
    }
    let dir = resolve_data_dir(a.data.data_dir.as_deref());
    let (train_set, _) = load_splits(&cfg.data, cfg.seed, &dir)?;
    let ck = train_on(&cfg, &train_set)?;
    ck.save(&a.out)?;
    info!(
        "{} epochs, margin accuracy {:.4}, converged {}",
        ck.meta.epochs_run, ck.meta.final_margin_accuracy, ck.meta.converged
    );
    if ck.meta.converged {
        Ok(0)
    } else {
        warn!("training stopped at max_epochs before reaching the stopping criterion");
        Ok(1)
    }
}

fn gamma_class_for(ck: &Checkpoint, flag: Option<f64>) -> CliResult<f64> {
    let g = flag.unwrap_or(if ck.train.stop_margin > 0.0 { ck.train.stop_margin } else { 10.0 });
    if !(g > 0.0 && g.is_finite()) {
        return Err(CliError::usage(anyhow!("gamma_class must be positive, got {g}")));
    }
    Ok(g)
}

pub fn cmd_audit(a: &AuditArgs) -> CliResult<u8> {
    if !(a.delta > 0.0 && a.delta < 1.0) {
        return Err(CliError::usage(anyhow!("--delta must be in (0, 1), got {}", a.delta)));
    }
    let ck = Checkpoint::load(&a.checkpoint)?;
    let gamma_class = gamma_class_for(&ck, a.gamma_class)?;
    let mut spec = ck.data.clone();
    if let Some(t) = a.test_m {
        spec.test_m = t;
    }
    let dir = resolve_data_dir(a.data.data_dir.as_deref());
    let (train_set, test) = load_splits(&spec, ck.seed, &dir)?;
    let result = audit(&ck.params, &train_set, test.as_ref(), gamma_class, a.delta)?;
    for w in &result.report.warnings {
        warn!("{w}");
    }
    let opts = RowOptions {
        loose: a.loose,
        figure_mode: a.figure_mode,
    };
    write_csv(&a.out, &opts.header(), &[result.values(opts)])?;
    if let Some(p) = &a.archive {
        write_archive(p, &result, &train_set)?;
    }
    Ok(0)
}

pub fn cmd_sweep(a: &SweepArgs) -> CliResult<u8> {
    let mut spec = match (&a.spec, &a.preset) {
        (Some(p), _) => SweepSpec::from_file(p)?,
        (None, Some(name)) => SweepSpec::preset(name).ok_or_else(|| {
            CliError::usage(anyhow!("unknown preset {name:?}; known: {}", PRESETS.join(", ")))
        })?,
        (None, None) => return Err(CliError::usage(anyhow!("give --spec or --preset"))),
    };
    if let Some(r) = a.runs {
        spec.runs = r;
    }
    if let Some(m) = a.m {
        spec.data.m = m;
    }
    if let Some(e) = a.max_epochs {
        spec.train.max_epochs = Some(e);
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let dir = resolve_data_dir(a.data.data_dir.as_deref());
    let outcome = run_sweep(&spec, &dir)?;
    write_outcome(&outcome, &a.out_dir)?;
    if a.keep_checkpoints {
        let ck_dir = a.out_dir.join("checkpoints");
        std::fs::create_dir_all(&ck_dir).map_err(|e| CliError::usage(anyhow!("{}: {e}", ck_dir.display())))?;
        for r in &outcome.rows {
            if let Ok((ck, _)) = &r.outcome {
                ck.save(&ck_dir.join(format!("{}{}_run{}.ckpt", spec.axis.name(), r.value, r.run)))?;
            }
        }
    }
    let failed = outcome.rows.iter().filter(|r| r.outcome.is_err()).count();
    if failed > 0 {
        warn!("{failed} of {} runs failed; see the status column", outcome.rows.len());
    }
    Ok(0)
}

pub fn cmd_verify_noise(a: &VerifyArgs) -> CliResult<u8> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let gamma_class = gamma_class_for(&ck, a.gamma_class)?;
    let dir = resolve_data_dir(a.data.data_dir.as_deref());
    let (train_set, _) = load_splits(&ck.data, ck.seed, &dir)?;
    let audited = audit(&ck.params, &train_set, None, gamma_class, 0.01)?;
    let sigma_star = audited.report.sigma_star;
    let sigmas = match &a.sigma_grid {
        Some(g) => {
            if g.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
                return Err(CliError::usage(anyhow!("sigma grid entries must be finite and >= 0")));
            }
            g.clone()
        }
        None => DEFAULT_RATIOS.iter().map(|r| r * sigma_star).collect(),
    };
    info!("sigma* = {sigma_star:.4e}; checks cover sampled inputs only, not all inputs");
    let check = NoiseCheck {
        sigmas,
        trials: a.trials,
        points: a.points,
        mu_noise: a.mu_noise,
        mu_points: a.mu_points,
        seed: a.seed,
    };
    let outcome = run_noise_check(&ck.params, &audited.scan.bounds, sigma_star, &train_set, &check)?;
    write_csv(&a.out, &NOISE_COLUMNS, &outcome.rows)?;
    Ok(if outcome.passed_up_to_star { 0 } else { 1 })
}

pub fn cmd_plot(a: &PlotArgs) -> CliResult<u8> {
    let series = read_series(&a.csv, &a.x, &a.columns)?;
    let r = render_svg(&a.x, &series);
    for (s, f) in series.iter().zip(&r.fits) {
        if let Some(f) = f {
            info!("{}: log10 slope {:.4} over {} points", s.name, f.slope, f.points);
        }
    }
    std::fs::write(&a.out, r.svg).map_err(|e| CliError::usage(anyhow!("{}: {e}", a.out.display())))?;
    Ok(0)
}
