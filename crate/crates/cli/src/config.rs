//! Run configuration: a commented TOML file. Every key is optional; command
//! line flags override the file.

use std::path::{Path, PathBuf};

use labeldist::classifier::{Optimizer, TrainConfig};
use labeldist::seed::RNG_ALGORITHM;
use labeldist::simulator::{
    BudgetPlan, SelectionStrategy, SingleLabelSource, SyntheticWorldConfig,
};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every random stream is derived from it by name.
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub rng: String,
    pub data: DataBlock,
    pub calibration: CalibrationBlock,
    pub train: TrainBlock,
    pub synthetic: SyntheticBlock,
    pub simulate: SimulateBlock,
    pub baseline: BaselineBlock,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: None,
            rng: RNG_ALGORITHM.to_string(),
            data: DataBlock::default(),
            calibration: CalibrationBlock::default(),
            train: TrainBlock::default(),
            synthetic: SyntheticBlock::default(),
            simulate: SimulateBlock::default(),
            baseline: BaselineBlock::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataBlock {
    pub annotations: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub features: Option<PathBuf>,
    /// Sidecar of true distributions; when set, simulations score against it.
    pub true_dist: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationBlock {
    /// `none`, `temp:<s>`, `temp:auto`, `pred:<alpha>[:mode]`,
    /// `pred:auto[:mode]` or `train:<alpha>`.
    pub method: String,
    pub grid_start: Option<f64>,
    pub grid_stop: Option<f64>,
    pub grid_step: Option<f64>,
    /// Entropy to match; defaults to the mean human entropy of the data.
    pub target_entropy: Option<f64>,
    pub bins: usize,
}

impl Default for CalibrationBlock {
    fn default() -> Self {
        CalibrationBlock {
            method: "none".into(),
            grid_start: None,
            grid_stop: None,
            grid_step: None,
            target_entropy: None,
            bins: labeldist::metrics::DEFAULT_BINS,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainBlock {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs_phase1: usize,
    pub epochs_phase2: usize,
    /// `sgd` or `adam`.
    pub optimizer: String,
    pub label_smoothing: Option<f64>,
    pub merged: bool,
}

impl Default for TrainBlock {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainBlock {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs_phase1: t.epochs_phase1,
            epochs_phase2: t.epochs_phase2,
            optimizer: "sgd".into(),
            label_smoothing: t.label_smoothing,
            merged: t.merged,
        }
    }
}

impl TrainBlock {
    pub fn to_train_config(&self, seed: u64) -> Result<TrainConfig, CliError> {
        let optimizer = match self.optimizer.as_str() {
            "sgd" => Optimizer::Sgd,
            "adam" => Optimizer::adam(),
            other => {
                return Err(CliError::input(format!(
                    "unknown optimizer `{other}` (sgd, adam)"
                )))
            }
        };
        let cfg = TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs_phase1: self.epochs_phase1,
            epochs_phase2: self.epochs_phase2,
            optimizer,
            label_smoothing: self.label_smoothing,
            merged: self.merged,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticBlock {
    pub n_examples: usize,
    pub feature_dim: usize,
    pub separation: f64,
    pub tau_gen: f64,
    pub votes: u32,
}

impl Default for SyntheticBlock {
    fn default() -> Self {
        let s = SyntheticWorldConfig::default();
        SyntheticBlock {
            n_examples: s.n_examples,
            feature_dim: s.feature_dim,
            separation: s.separation,
            tau_gen: s.tau_gen,
            votes: s.votes,
        }
    }
}

impl SyntheticBlock {
    pub fn to_world_config(&self, seed: u64) -> Result<SyntheticWorldConfig, CliError> {
        let cfg = SyntheticWorldConfig {
            n_examples: self.n_examples,
            feature_dim: self.feature_dim,
            separation: self.separation,
            tau_gen: self.tau_gen,
            votes: self.votes,
            weights: None,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateBlock {
    /// `synthetic` generates a world from `[synthetic]`; `files` reads
    /// `[data]` annotations and features.
    pub source: String,
    pub n_eval: usize,
    pub multi_pool_size: usize,
    /// Plans as `budget:n_single:n_multi:k_way`.
    pub plans: Vec<String>,
    pub strategies: Vec<String>,
    /// `pool_vote` or `old_gold`.
    pub single_label: String,
    pub validate: bool,
}

impl Default for SimulateBlock {
    fn default() -> Self {
        SimulateBlock {
            source: "synthetic".into(),
            n_eval: 500,
            multi_pool_size: 500,
            plans: vec!["500:500:0:0".into(), "500:300:20:10".into()],
            strategies: vec!["random".into()],
            single_label: SingleLabelSource::default().name().into(),
            validate: true,
        }
    }
}

impl SimulateBlock {
    pub fn plans(&self) -> Result<Vec<BudgetPlan>, CliError> {
        Ok(self
            .plans
            .iter()
            .map(|p| p.parse())
            .collect::<Result<_, _>>()?)
    }

    pub fn strategies(&self) -> Result<Vec<SelectionStrategy>, CliError> {
        Ok(self
            .strategies
            .iter()
            .map(|s| s.parse())
            .collect::<Result<_, _>>()?)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineBlock {
    pub resamples: usize,
}

impl Default for BaselineBlock {
    fn default() -> Self {
        BaselineBlock { resamples: 10 }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::input(format!("config: {e}")))?;
        if cfg.rng != RNG_ALGORITHM {
            return Err(CliError::input(format!(
                "config: rng `{}` is not supported (only `{RNG_ALGORITHM}`)",
                cfg.rng
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.calibration.method, "none");
        assert_eq!(
            cfg.train.to_train_config(0).unwrap(),
            TrainConfig::default()
        );
    }

    #[test]
    fn rejects_unknown_keys_and_rngs() {
        assert!(RunConfig::from_toml("sede = 1").is_err());
        assert!(RunConfig::from_toml("[train]\nlr = 1").is_err());
        assert!(RunConfig::from_toml("rng = \"pcg64\"").is_err());
    }

    #[test]
    fn parses_blocks() {
        let cfg = RunConfig::from_toml(
            "seed = 9\n[train]\noptimizer = \"adam\"\n[simulate]\nplans = [\"10:10:0:0\"]\nsingle_label = \"old_gold\"\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert!(matches!(
            cfg.train.to_train_config(1).unwrap().optimizer,
            Optimizer::Adam { .. }
        ));
        assert_eq!(cfg.simulate.plans().unwrap()[0].budget, 10);
    }
}
