//! Plain-text checkpoints.
//!
//! A checkpoint is a TOML header (format version, dims, seeds, the resolved
//! training config and training outcome) followed by a separator line
//!
//! ```text
//! %% parameters sha256=<hex digest of everything below this line>
//! ```
//!
//! and then one block per matrix: a line `W <layer> <rows> <cols>` (or `Z`
//! for the initialization snapshot) followed by one line per row. Every
//! entry is written with 17 significant digits, which round-trips `f64`
//! exactly, so a reloaded network computes bit-identical outputs.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use pacnr::linalg::Matrix;
use pacnr::network::MlpParams;
use pacnr::trainer::{Optimizer, TrainConfig, TrainResult};

use crate::config::{optimizer_label, DataSpec, NetworkSpec, RunConfig};
use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;
const SEPARATOR: &str = "%% parameters sha256=";

/// The optimizer settings a network was actually trained with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainEcho {
    pub optimizer: String,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub stop_fraction: f64,
    pub stop_margin: f64,
    pub max_epochs: usize,
}

impl TrainEcho {
    pub fn of(cfg: &TrainConfig) -> Self {
        Self {
            optimizer: optimizer_label(cfg.optimizer).to_string(),
            learning_rate: cfg.learning_rate,
            batch_size: cfg.batch_size,
            stop_fraction: cfg.stop_fraction,
            stop_margin: cfg.stop_margin,
            max_epochs: cfg.max_epochs,
        }
    }

    pub fn to_config(&self, seed: u64) -> anyhow::Result<TrainConfig> {
        let optimizer = match self.optimizer.as_str() {
            "sgd" => Optimizer::Sgd,
            "adam" => Optimizer::Adam,
            other => bail!("unknown optimizer {other:?}"),
        };
        Ok(TrainConfig {
            optimizer,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            stop_fraction: self.stop_fraction,
            stop_margin: self.stop_margin,
            max_epochs: self.max_epochs,
            seed,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMeta {
    pub epochs_run: usize,
    pub final_margin_accuracy: f64,
    pub converged: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format_version: u32,
    dims: Vec<usize>,
    seed: u64,
    network: NetworkSpec,
    data: DataSpec,
    train: TrainEcho,
    result: TrainingMeta,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub network: NetworkSpec,
    pub data: DataSpec,
    pub train: TrainEcho,
    pub meta: TrainingMeta,
    pub params: MlpParams,
}

impl Checkpoint {
    pub fn from_training(cfg: &RunConfig, train_cfg: &TrainConfig, result: TrainResult) -> Self {
        Self {
            seed: cfg.seed,
            network: cfg.network.clone(),
            data: cfg.data.clone(),
            train: TrainEcho::of(train_cfg),
            meta: TrainingMeta {
                epochs_run: result.epochs_run,
                final_margin_accuracy: result.final_margin_accuracy,
                converged: result.converged,
            },
            params: result.params,
        }
    }

    pub fn to_text(&self) -> String {
        let header = Header {
            format_version: FORMAT_VERSION,
            dims: self.params.dims().to_vec(),
            seed: self.seed,
            network: self.network.clone(),
            data: self.data.clone(),
            train: self.train.clone(),
            result: self.meta.clone(),
        };
        let mut body = String::new();
        write_matrices(&mut body, 'W', self.params.weights());
        write_matrices(&mut body, 'Z', self.params.init());
        let digest = hex::encode(Sha256::digest(body.as_bytes()));
        let head = toml::to_string(&header).expect("checkpoint header serializes");
        format!("{head}{SEPARATOR}{digest}\n{body}")
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let sep = text
            .find(SEPARATOR)
            .ok_or_else(|| anyhow!("missing parameter separator line"))?;
        let header: Header = toml::from_str(&text[..sep]).context("bad checkpoint header")?;
        if header.format_version != FORMAT_VERSION {
            bail!("unsupported checkpoint format version {}", header.format_version);
        }
        let rest = &text[sep + SEPARATOR.len()..];
        let nl = rest.find('\n').ok_or_else(|| anyhow!("truncated after separator"))?;
        let digest = rest[..nl].trim();
        let body = &rest[nl + 1..];
        let actual = hex::encode(Sha256::digest(body.as_bytes()));
        if actual != digest {
            bail!("parameter checksum mismatch: header says {digest}, content hashes to {actual}");
        }
        let (weights, init) = parse_matrices(body)?;
        let params = MlpParams::new(weights, init).context("parameters do not form a network")?;
        if params.dims() != header.dims.as_slice() {
            bail!("header dims {:?} disagree with matrices {:?}", header.dims, params.dims());
        }
        Ok(Self {
            seed: header.seed,
            network: header.network,
            data: header.data,
            train: header.train,
            meta: header.result,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_text())
            .with_context(|| format!("cannot write checkpoint {}", path.display()))
            .map_err(CliError::usage)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read checkpoint {}", path.display()))?;
        Ok(Self::parse(&text).with_context(|| format!("invalid checkpoint {}", path.display()))?)
    }
}

fn write_matrices(out: &mut String, tag: char, mats: &[Matrix]) {
    for (i, m) in mats.iter().enumerate() {
        let _ = writeln!(out, "{tag} {} {} {}", i + 1, m.rows(), m.cols());
        for r in 0..m.rows() {
            let mut first = true;
            for v in m.row(r) {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{v:.16e}");
            }
            out.push('\n');
        }
    }
}

fn parse_matrices(body: &str) -> anyhow::Result<(Vec<Matrix>, Vec<Matrix>)> {
    let mut weights = Vec::new();
    let mut init = Vec::new();
    let mut lines = body.lines().enumerate();
    while let Some((ln, line)) = lines.next() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let tag = parts.next().unwrap_or_default();
        let nums: Vec<usize> = parts
            .map(|p| p.parse().with_context(|| format!("body line {}: bad header {line:?}", ln + 1)))
            .collect::<anyhow::Result<_>>()?;
        let [layer, rows, cols] = nums[..] else {
            bail!("body line {}: expected `<tag> <layer> <rows> <cols>`", ln + 1);
        };
        let target = match tag {
            "W" => &mut weights,
            "Z" => &mut init,
            _ => bail!("body line {}: unknown block tag {tag:?}", ln + 1),
        };
        if layer != target.len() + 1 {
            bail!("body line {}: {tag} block {layer} out of order", ln + 1);
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (rl, row) = lines.next().ok_or_else(|| anyhow!("{tag}{layer}: truncated"))?;
            let before = data.len();
            for tok in row.split_whitespace() {
                data.push(
                    tok.parse::<f64>()
                        .with_context(|| format!("body line {}: bad number {tok:?}", rl + 1))?,
                );
            }
            if data.len() - before != cols {
                bail!("body line {}: expected {cols} entries, found {}", rl + 1, data.len() - before);
            }
        }
        target.push(Matrix::new(rows, cols, data)?);
    }
    Ok((weights, init))
}
