//! Experiment configuration file (TOML).
//!
//! Every section is optional and falls back to the defaults below; unknown
//! keys are rejected. Command-line flags are applied on top of the file.

use std::path::{Path, PathBuf};

use dbb_core::drift::{DriftKind, DriftModel};
use dbb_core::simulator::{GroundTruth, SweepSpec};
use dbb_core::trainer::default_clip_range;
use dbb_core::{AdvantageScheme, Discount, TrainerConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub global: GlobalConfig,
    pub sweep_lambda: SweepLambdaConfig,
    pub sweep_n: SweepNConfig,
    pub mc_validate: McValidateConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalConfig {
    pub seed: u64,
    /// Output file; each command has its own default name when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    pub worker_count: usize,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_path: None,
            worker_count: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepLambdaConfig {
    pub trajectory: DriftModel,
    pub lambdas: Vec<f64>,
    pub n: usize,
    pub replications: usize,
    /// Empty means every epoch.
    pub eval_epochs: Vec<usize>,
    pub ground_truth: GroundTruth,
}

impl Default for SweepLambdaConfig {
    fn default() -> Self {
        Self {
            trajectory: DriftModel::default(),
            lambdas: (1..=20).map(|i| i as f64 / 20.0).collect(),
            n: 8,
            replications: 20_000,
            eval_epochs: Vec::new(),
            ground_truth: GroundTruth::Exact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepNConfig {
    pub trajectory: DriftModel,
    pub lambda: f64,
    pub group_sizes: Vec<usize>,
    pub replications: usize,
    pub eval_epochs: Vec<usize>,
    pub ground_truth: GroundTruth,
}

impl Default for SweepNConfig {
    fn default() -> Self {
        Self {
            trajectory: DriftModel::default(),
            lambda: 0.45,
            group_sizes: vec![2, 4, 8, 16, 32, 64, 128],
            replications: 20_000,
            eval_epochs: Vec::new(),
            ground_truth: GroundTruth::Exact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McValidateConfig {
    pub trajectories: Vec<DriftModel>,
    pub lambdas: Vec<f64>,
    pub group_sizes: Vec<usize>,
    pub replications: usize,
    /// Allowed distance between empirical and closed-form MSE, in standard errors.
    pub tolerance_stderr: f64,
    /// Minimum fraction of grid points that must agree.
    pub pass_fraction: f64,
}

impl Default for McValidateConfig {
    fn default() -> Self {
        Self {
            trajectories: default_validation_trajectories(),
            lambdas: vec![0.25, 0.5, 0.75, 1.0],
            group_sizes: vec![8],
            replications: 100_000,
            tolerance_stderr: 3.0,
            pass_fraction: 0.95,
        }
    }
}

/// Five ten-epoch trajectories, one of each drift kind.
pub fn default_validation_trajectories() -> Vec<DriftModel> {
    let tau = 10;
    vec![
        DriftModel::new(DriftKind::Stationary { p: 0.5 }, tau),
        DriftModel::new(
            DriftKind::Step {
                p_before: 0.2,
                p_after: 0.7,
                change_epoch: 6,
            },
            tau,
        ),
        DriftModel::new(
            DriftKind::LinearRamp {
                p_start: 0.1,
                p_end: 0.9,
            },
            tau,
        ),
        DriftModel::new(
            DriftKind::Logistic {
                midpoint: 5.0,
                rate: 0.8,
                floor: 0.05,
                ceiling: 0.95,
            },
            tau,
        ),
        DriftModel::new(
            DriftKind::BoundedRandomWalk {
                p_start: 0.5,
                step_std: 0.1,
            },
            tau,
        ),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub prompts: usize,
    pub k_answers: usize,
    pub n_rollouts: usize,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub updates_per_batch: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub scheme: String,
    /// Defaults to (0.2, 0.28) for point schemes and (0.98, 0.98) for DBB.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_low: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip_high: Option<f64>,
    pub initial_correct_logit: f64,
    pub snapshot_path: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let core = TrainerConfig::default();
        Self {
            prompts: 200,
            k_answers: 16,
            n_rollouts: core.n_rollouts,
            epochs: core.epochs,
            minibatch_size: core.minibatch_size,
            updates_per_batch: core.updates_per_batch,
            learning_rate: core.learning_rate,
            lambda: core.lambda.get(),
            scheme: core.scheme.name().to_string(),
            clip_low: None,
            clip_high: None,
            initial_correct_logit: core.initial_correct_logit,
            snapshot_path: PathBuf::from("dbb_posterior.snapshot"),
        }
    }
}

impl TrainConfig {
    pub fn trainer_config(&self, seed: u64) -> Result<TrainerConfig, CliError> {
        let scheme: AdvantageScheme = self.scheme.parse()?;
        let (low, high) = default_clip_range(scheme);
        let cfg = TrainerConfig {
            n_rollouts: self.n_rollouts,
            epochs: self.epochs,
            minibatch_size: self.minibatch_size,
            updates_per_batch: self.updates_per_batch,
            learning_rate: self.learning_rate,
            lambda: Discount::new(self.lambda)?,
            scheme,
            clip_low: self.clip_low.unwrap_or(low),
            clip_high: self.clip_high.unwrap_or(high),
            initial_correct_logit: self.initial_correct_logit,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn all_epochs_if_empty(epochs: &[usize], trajectory: &DriftModel) -> Vec<usize> {
    if epochs.is_empty() {
        (1..=trajectory.length).collect()
    } else {
        epochs.to_vec()
    }
}

impl SweepLambdaConfig {
    pub fn spec(&self, seed: u64) -> Result<SweepSpec, CliError> {
        let spec = SweepSpec {
            trajectory: self.trajectory.clone(),
            lambdas: self.lambdas.clone(),
            group_sizes: vec![self.n],
            replications: self.replications,
            eval_epochs: all_epochs_if_empty(&self.eval_epochs, &self.trajectory),
            base_seed: seed,
            ground_truth: self.ground_truth,
        };
        if spec.lambdas.len() < 2 {
            return Err(CliError::Config(
                "sweep_lambda needs at least two lambdas".into(),
            ));
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl SweepNConfig {
    pub fn spec(&self, seed: u64) -> Result<SweepSpec, CliError> {
        if self.group_sizes.is_empty() {
            return Err(CliError::Config("sweep_n.group_sizes is empty".into()));
        }
        let spec = SweepSpec {
            trajectory: self.trajectory.clone(),
            lambdas: vec![self.lambda],
            group_sizes: self.group_sizes.clone(),
            replications: self.replications,
            eval_epochs: all_epochs_if_empty(&self.eval_epochs, &self.trajectory),
            base_seed: seed,
            ground_truth: self.ground_truth,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl McValidateConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.trajectories.is_empty() {
            return Err(CliError::Config("mc_validate.trajectories is empty".into()));
        }
        if self.tolerance_stderr.is_nan() || self.tolerance_stderr <= 0.0 {
            return Err(CliError::Config("tolerance_stderr must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.pass_fraction) {
            return Err(CliError::Config("pass_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        Self::from_toml(&text)
    }

    /// `global.output_path`, or `default` when unset.
    pub fn output_or(&self, default: &str) -> PathBuf {
        self.global
            .output_path
            .clone()
            .unwrap_or_else(|| PathBuf::from(default))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn customized_config_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.global.output_path = Some("out/x.csv".into());
        cfg.global.seed = 123;
        cfg.train.clip_low = Some(0.1);
        cfg.sweep_n.ground_truth = GroundTruth::Reference { samples: 128 };
        cfg.sweep_lambda.lambdas = vec![0.1, 1.0 / 3.0, 0.7];
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            [global]
            seed = 7

            [sweep_n.trajectory]
            length = 5
            kind = { type = "step", p_before = 0.2, p_after = 0.8, change_epoch = 3 }
            "#,
        )
        .unwrap();
        assert_eq!(cfg.global.seed, 7);
        assert_eq!(cfg.sweep_n.trajectory.length, 5);
        assert_eq!(cfg.train, TrainConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        for text in [
            "[global]\nsed = 1\n",
            "[bogus]\nx = 1\n",
            "[sweep_n.trajectory]\nlength = 3\nkind = { type = \"stationary\", p = 0.5, q = 1 }\n",
        ] {
            assert!(ExperimentConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn empty_n_grid_is_a_config_error() {
        let cfg = SweepNConfig {
            group_sizes: vec![],
            ..SweepNConfig::default()
        };
        assert!(matches!(cfg.spec(0), Err(CliError::Config(_))));
    }

    #[test]
    fn clip_defaults_follow_scheme() {
        let mut t = TrainConfig::default();
        let c = t.trainer_config(0).unwrap();
        assert_eq!((c.clip_low, c.clip_high), (0.98, 0.98));
        t.scheme = "grpo-point".into();
        let c = t.trainer_config(0).unwrap();
        assert_eq!((c.clip_low, c.clip_high), (0.2, 0.28));
        t.clip_high = Some(0.5);
        assert_eq!(t.trainer_config(0).unwrap().clip_high, 0.5);
        t.scheme = "nope".into();
        assert!(t.trainer_config(0).is_err());
    }
}
