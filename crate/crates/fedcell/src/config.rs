//! Experiment configuration: TOML parsing with strict validation, fully
//! resolved defaults, and the per-round metrics table schema.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_cifar10, make_synthetic, DatasetSource, SyntheticParams};
use crate::error::{Result, SimError};
use crate::nn::ModelSpec;
use crate::protocols::Protocol;
use crate::seeds::{SeedPlan, StreamDomain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Sparse uploads contribute explicit zeros at pruned coordinates.
    #[default]
    ZerosInMean,
    /// Each coordinate averages only over clients whose mask keeps it.
    MaskNormalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Cifar10 {
        path: PathBuf,
    },
    Synthetic {
        #[serde(default = "defaults::num_classes")]
        num_classes: usize,
        #[serde(default = "defaults::dim")]
        dim: usize,
        #[serde(default = "defaults::per_class_train")]
        per_class_train: usize,
        #[serde(default = "defaults::per_class_test")]
        per_class_test: usize,
        #[serde(default = "defaults::cluster_sep")]
        cluster_sep: f64,
    },
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Synthetic {
            num_classes: defaults::num_classes(),
            dim: defaults::dim(),
            per_class_train: defaults::per_class_train(),
            per_class_test: defaults::per_class_test(),
            cluster_sep: defaults::cluster_sep(),
        }
    }
}

impl DatasetConfig {
    pub fn load(&self, seeds: &SeedPlan) -> Result<DatasetSource> {
        match self {
            DatasetConfig::Cifar10 { path } => load_cifar10(path),
            DatasetConfig::Synthetic {
                num_classes,
                dim,
                per_class_train,
                per_class_test,
                cluster_sep,
            } => {
                let mut rng = seeds.stream(StreamDomain::SyntheticData, 0, 0);
                make_synthetic(
                    SyntheticParams {
                        num_classes: *num_classes,
                        dim: *dim,
                        per_class_train: *per_class_train,
                        per_class_test: *per_class_test,
                        cluster_sep: *cluster_sep,
                    },
                    &mut rng,
                )
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let DatasetConfig::Synthetic {
            num_classes,
            dim,
            per_class_train,
            per_class_test,
            cluster_sep,
        } = self
        {
            range(*num_classes >= 2, "dataset.num_classes", "must be >= 2")?;
            range(*dim >= 1, "dataset.dim", "must be >= 1")?;
            range(*per_class_train >= 1, "dataset.per_class_train", "must be >= 1")?;
            range(*per_class_test >= 1, "dataset.per_class_test", "must be >= 1")?;
            range(
                cluster_sep.is_finite() && *cluster_sep > 0.0,
                "dataset.cluster_sep",
                "must be > 0",
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// Dense net: input -> hidden... -> classes, ReLU on hidden layers.
    Mlp {
        #[serde(default = "defaults::hidden")]
        hidden: Vec<usize>,
    },
    /// Two stride-2 convolutions plus three dense layers over 3x32x32
    /// inputs and 10 classes (62,006 parameters).
    LenetCifar,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::Mlp { hidden: defaults::hidden() }
    }
}

impl ModelConfig {
    pub fn to_spec(&self, input_dim: usize, num_classes: usize) -> Result<ModelSpec> {
        match self {
            ModelConfig::Mlp { hidden } => ModelSpec::mlp(input_dim, hidden, num_classes),
            ModelConfig::LenetCifar => {
                if input_dim != 3 * 32 * 32 || num_classes != 10 {
                    return Err(SimError::Config(format!(
                        "lenet_cifar expects 3072-dim inputs and 10 classes, \
                         dataset provides {input_dim} and {num_classes}"
                    )));
                }
                Ok(ModelSpec::lenet_cifar())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let ModelConfig::Mlp { hidden } = self {
            range(hidden.iter().all(|&h| h >= 1), "model.hidden", "entries must be >= 1")?;
        }
        Ok(())
    }
}

mod defaults {
    pub fn num_classes() -> usize {
        10
    }
    pub fn dim() -> usize {
        16
    }
    pub fn per_class_train() -> usize {
        200
    }
    pub fn per_class_test() -> usize {
        40
    }
    pub fn cluster_sep() -> f64 {
        2.0
    }
    pub fn hidden() -> Vec<usize> {
        vec![32]
    }
    pub fn rounds() -> usize {
        40
    }
    pub fn users() -> usize {
        20
    }
    pub fn participation() -> f64 {
        1.0
    }
    pub fn samples_per_user() -> usize {
        100
    }
    pub fn labels_per_user() -> usize {
        3
    }
    pub fn epochs() -> usize {
        10
    }
    pub fn batch_size() -> usize {
        32
    }
    pub fn learning_rate() -> f64 {
        0.01
    }
    pub fn prune_step() -> f64 {
        0.2
    }
    pub fn prune_target() -> f64 {
        0.8
    }
    pub fn threshold_decay() -> f64 {
        0.9
    }
    pub fn threshold_default() -> f64 {
        0.5
    }
    pub fn val_fraction() -> f64 {
        0.2
    }
}

/// Fully resolved experiment parameters. Every field serializes, so the
/// emitted `config.json` alone reproduces a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    #[serde(default)]
    pub seed: u64,
    /// Communication rounds T.
    #[serde(default = "defaults::rounds")]
    pub rounds: usize,
    /// Population size K.
    #[serde(default = "defaults::users")]
    pub users: usize,
    /// Participation ratio C in [0, 1]; 0 selects a single participant.
    #[serde(default = "defaults::participation")]
    pub participation: f64,
    /// Per-user training shard size n_k.
    #[serde(default = "defaults::samples_per_user")]
    pub samples_per_user: usize,
    #[serde(default = "defaults::labels_per_user")]
    pub labels_per_user: usize,
    /// Local epochs E per round.
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    /// Pruning-rate increment per winning-ticket discovery.
    #[serde(default = "defaults::prune_step")]
    pub prune_step: f64,
    /// Target cumulative pruning rate.
    #[serde(default = "defaults::prune_target")]
    pub prune_target: f64,
    /// Multiplier applied to a straggler's threshold after a failed round.
    #[serde(default = "defaults::threshold_decay")]
    pub threshold_decay: f64,
    /// Default validation threshold, restored after each pass.
    #[serde(default = "defaults::threshold_default")]
    pub threshold_default: f64,
    /// Fraction of n_k held out per user as validation data.
    #[serde(default = "defaults::val_fraction")]
    pub val_fraction: f64,
    /// Advance the pruning rate only on passed validation rather than on
    /// every ramp round.
    #[serde(default)]
    pub defer_rate_advance: bool,
    /// Rank pruning magnitudes per layer instead of globally.
    #[serde(default)]
    pub per_layer_pruning: bool,
    #[serde(default)]
    pub aggregation: Aggregation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelConfig,
}

fn range(ok: bool, key: &str, requirement: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(SimError::Usage(format!("config key \"{key}\" {requirement}")))
    }
}

impl ExperimentConfig {
    /// A config with every default applied; callers set what they need.
    pub fn with_protocol(protocol: Protocol) -> Self {
        Self {
            protocol,
            seed: 0,
            rounds: defaults::rounds(),
            users: defaults::users(),
            participation: defaults::participation(),
            samples_per_user: defaults::samples_per_user(),
            labels_per_user: defaults::labels_per_user(),
            epochs: defaults::epochs(),
            batch_size: defaults::batch_size(),
            learning_rate: defaults::learning_rate(),
            prune_step: defaults::prune_step(),
            prune_target: defaults::prune_target(),
            threshold_decay: defaults::threshold_decay(),
            threshold_default: defaults::threshold_default(),
            val_fraction: defaults::val_fraction(),
            defer_rate_advance: false,
            per_layer_pruning: false,
            aggregation: Aggregation::default(),
            out_dir: None,
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        range(
            self.participation.is_finite() && (0.0..=1.0).contains(&self.participation),
            "participation",
            "must be in [0, 1]",
        )?;
        range(self.users >= 1, "users", "must be >= 1")?;
        range(self.samples_per_user >= 1, "samples_per_user", "must be >= 1")?;
        range(self.labels_per_user >= 1, "labels_per_user", "must be >= 1")?;
        range(self.epochs >= 1, "epochs", "must be >= 1")?;
        range(self.batch_size >= 1, "batch_size", "must be >= 1")?;
        range(
            self.learning_rate.is_finite() && self.learning_rate > 0.0,
            "learning_rate",
            "must be > 0",
        )?;
        range(
            self.prune_step.is_finite() && self.prune_step > 0.0 && self.prune_step < 1.0,
            "prune_step",
            "must be in (0, 1)",
        )?;
        range(
            self.prune_target.is_finite() && self.prune_target > 0.0 && self.prune_target < 1.0,
            "prune_target",
            "must be in (0, 1)",
        )?;
        range(
            self.threshold_decay.is_finite()
                && (0.0..1.0).contains(&self.threshold_decay),
            "threshold_decay",
            "must be in [0, 1)",
        )?;
        range(
            self.threshold_default.is_finite()
                && (0.0..=1.0).contains(&self.threshold_default),
            "threshold_default",
            "must be in [0, 1]",
        )?;
        range(
            self.val_fraction.is_finite()
                && self.val_fraction > 0.0
                && self.val_fraction < 1.0,
            "val_fraction",
            "must be in (0, 1)",
        )?;
        self.dataset.validate()?;
        self.model.validate()?;
        Ok(())
    }
}

/// Reads and validates a TOML experiment config. Unknown keys, type errors,
/// and range violations are usage errors naming the offending key; a
/// missing `protocol` is reported the same way.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SimError::Usage(format!("config file {}: {e}", path.display())))?;
    let cfg: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| SimError::Usage(format!("config file {}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

/// One row per communication round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub round: usize,
    /// Mean personalized test accuracy over all users.
    pub acc_mean: f64,
    pub ul_bytes: u64,
    pub dl_bytes: u64,
    /// Cumulative uplink + downlink bytes through this round.
    pub cum_bytes: u64,
    pub sparsity_mean: f64,
    /// Participants that pruned this round.
    pub pruners: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}
