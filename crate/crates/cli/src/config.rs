//! TOML run configuration and data loading.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use pacnr::data::{load_mnist, mnist_paths, subset, synthetic_blobs, Dataset};
use pacnr::linalg::RngStream;
use pacnr::network::InitScheme;
use pacnr::trainer::{Optimizer, TrainConfig};

use crate::error::{CliError, CliResult};

/// Environment variable consulted for the MNIST directory.
pub const DATA_DIR_ENV: &str = "PACNR_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "data/mnist5k";

/// Stream ids for the independent random streams of one run.
const DATA_STREAM: u64 = 0x6461_7461;
const INIT_STREAM: u64 = 0x696e_6974;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    #[default]
    Mnist,
    Blobs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    #[serde(default)]
    pub source: Source,
    /// Training points.
    pub m: usize,
    /// Held-out points drawn from what is left after the training sample.
    #[serde(default)]
    pub test_m: usize,
    /// Seed of the sampling stream; defaults to the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_seed: Option<u64>,
    #[serde(default = "default_features")]
    pub features: usize,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_separation")]
    pub separation: f64,
}

fn default_features() -> usize {
    8
}
fn default_classes() -> usize {
    3
}
fn default_separation() -> f64 {
    6.0
}

impl DataSpec {
    pub fn mnist(m: usize) -> Self {
        Self {
            source: Source::Mnist,
            m,
            test_m: 0,
            sample_seed: None,
            features: default_features(),
            classes: default_classes(),
            separation: default_separation(),
        }
    }

    pub fn blobs(m: usize, features: usize, classes: usize, separation: f64) -> Self {
        Self {
            source: Source::Blobs,
            features,
            classes,
            separation,
            ..Self::mnist(m)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitName {
    #[default]
    InvSqrtFanIn,
    Footnote,
}

impl From<InitName> for InitScheme {
    fn from(n: InitName) -> Self {
        match n {
            InitName::InvSqrtFanIn => InitScheme::InvSqrtFanIn,
            InitName::Footnote => InitScheme::PaperFootnote,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    /// Number of weight layers `D`.
    pub depth: usize,
    /// Hidden width `H`.
    pub width: usize,
    #[serde(default)]
    pub init: InitName,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerName {
    #[default]
    Sgd,
    Adam,
    /// Adam preset for depth 20 and up, SGD preset otherwise.
    Auto,
}

/// Optimizer settings. Unset fields take the preset values of the chosen
/// optimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    #[serde(default)]
    pub optimizer: OptimizerName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_epochs: Option<usize>,
}

impl TrainSpec {
    pub fn resolve(&self, depth: usize, seed: u64) -> TrainConfig {
        let base = match self.optimizer {
            OptimizerName::Sgd => TrainConfig::sgd_default(seed),
            OptimizerName::Adam => TrainConfig::adam_deep(seed),
            OptimizerName::Auto => TrainConfig::for_depth(depth, seed),
        };
        TrainConfig {
            learning_rate: self.learning_rate.unwrap_or(base.learning_rate),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            stop_fraction: self.stop_fraction.unwrap_or(base.stop_fraction),
            stop_margin: self.stop_margin.unwrap_or(base.stop_margin),
            max_epochs: self.max_epochs.unwrap_or(base.max_epochs),
            ..base
        }
    }
}

/// Everything `train` needs: one network, one dataset, one optimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub network: NetworkSpec,
    pub data: DataSpec,
    #[serde(default)]
    pub train: TrainSpec,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.network.depth < 2 || self.network.width == 0 {
            return Err(CliError::usage(anyhow::anyhow!(
                "network needs depth >= 2 and width >= 1, got depth {} width {}",
                self.network.depth,
                self.network.width
            )));
        }
        if self.data.m == 0 {
            return Err(CliError::usage(anyhow::anyhow!("data.m must be positive")));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        self.train.resolve(self.network.depth, self.seed)
    }

    pub fn init_rng(&self) -> RngStream {
        RngStream::new(self.seed, INIT_STREAM)
    }
}

pub fn optimizer_label(o: Optimizer) -> &'static str {
    match o {
        Optimizer::Sgd => "sgd",
        Optimizer::Adam => "adam",
    }
}

/// Data directory from the flag, else the environment, else the default.
pub fn resolve_data_dir(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR))
}

/// Train split and optional test split described by `spec`.
///
/// The same spec and seed always select the same points, which is how
/// `audit` recovers the training set of a checkpoint.
pub fn load_splits(spec: &DataSpec, run_seed: u64, data_dir: &Path) -> CliResult<(Dataset, Option<Dataset>)> {
    let seed = spec.sample_seed.unwrap_or(run_seed);
    let mut rng = RngStream::new(seed, DATA_STREAM);
    let total = spec.m + spec.test_m;
    let pool = match spec.source {
        Source::Mnist => {
            let (images, labels) = mnist_paths(data_dir);
            for p in [&images, &labels] {
                if !p.exists() {
                    return Err(CliError::usage(anyhow::anyhow!(
                        "data file not found: {} (set --data-dir or {DATA_DIR_ENV})",
                        p.display()
                    )));
                }
            }
            let full = load_mnist(&images, &labels)?;
            if total > full.len() {
                return Err(CliError::usage(anyhow::anyhow!(
                    "asked for {total} points but {} has {}",
                    images.display(),
                    full.len()
                )));
            }
            subset(&full, total, &mut rng)?
        }
        Source::Blobs => synthetic_blobs(total, spec.features, spec.classes, spec.separation, &mut rng)?,
    };
    if spec.test_m == 0 {
        return Ok((pool, None));
    }
    let (train, test) = pool.split_at(spec.m)?;
    Ok((train, Some(test)))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 3

[network]
depth = 3
width = 16

[data]
source = "blobs"
m = 90
test_m = 30

[train]
max_epochs = 50
stop_margin = 1.0
"#;

    #[test]
    fn parses_and_fills_presets() {
        let cfg: RunConfig = toml::from_str(SAMPLE).unwrap();
        let tc = cfg.train_config();
        assert_eq!(tc.learning_rate, 0.1);
        assert_eq!(tc.batch_size, 64);
        assert_eq!(tc.max_epochs, 50);
        assert_eq!(tc.stop_margin, 1.0);
        assert_eq!(cfg.data.features, 8);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = SAMPLE.replace("width = 16", "width = 16\nwidht = 3");
        assert!(toml::from_str::<RunConfig>(&bad).is_err());
    }

    #[test]
    fn auto_picks_adam_when_deep() {
        let spec = TrainSpec {
            optimizer: OptimizerName::Auto,
            ..Default::default()
        };
        assert_eq!(spec.resolve(28, 0).optimizer, Optimizer::Adam);
        assert_eq!(spec.resolve(4, 0).optimizer, Optimizer::Sgd);
    }

    #[test]
    fn splits_are_reproducible_and_disjoint() {
        let cfg: RunConfig = toml::from_str(SAMPLE).unwrap();
        let dir = Path::new("unused");
        let (a, ta) = load_splits(&cfg.data, cfg.seed, dir).unwrap();
        let (b, _) = load_splits(&cfg.data, cfg.seed, dir).unwrap();
        assert_eq!(a.examples, b.examples);
        assert_eq!(a.len(), 90);
        assert_eq!(ta.unwrap().len(), 30);
    }

    #[test]
    fn missing_mnist_dir_names_the_path() {
        let spec = DataSpec::mnist(10);
        let err = load_splits(&spec, 0, Path::new("/nonexistent/mnist")).unwrap_err();
        assert_eq!(err.code, 2);
        assert!(err.to_string().contains("/nonexistent/mnist"));
    }
}
