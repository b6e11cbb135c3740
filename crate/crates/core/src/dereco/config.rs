use serde::{Deserialize, Serialize};

use super::DerecoError;
use crate::mappo::{TrainerConfig, HIDDEN};
use crate::transportsim::EnvConfig;

/// Supervised reconstruction of the stage-1 representation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderTrainConfig {
    /// Truncated-BPTT window in steps.
    pub window: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Sequences per gradient step.
    pub batch_sequences: usize,
    pub validation_fraction: f64,
    pub max_grad_norm: f64,
}

impl Default for EncoderTrainConfig {
    fn default() -> Self {
        Self {
            window: 32,
            lr: 1e-3,
            epochs: 20,
            patience: 3,
            batch_sequences: 16,
            validation_fraction: 0.1,
            max_grad_norm: 1.0,
        }
    }
}

impl EncoderTrainConfig {
    pub fn validate(&self) -> Result<(), DerecoError> {
        if self.window == 0 || self.epochs == 0 || self.batch_sequences == 0 {
            return Err(DerecoError::Config(
                "encoder window, epochs and batch size must be positive".into(),
            ));
        }
        if !(self.lr > 0.0) {
            return Err(DerecoError::Config(format!(
                "encoder lr must be positive, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(DerecoError::Config(format!(
                "validation_fraction must be in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

/// Everything a method's training schedule needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub env: EnvConfig,
    /// PPO settings shared by every stage; `total_steps` is replaced by the
    /// stage budgets below.
    pub trainer: TrainerConfig,
    /// Width of every hidden layer and of the representation `g`.
    pub hidden: usize,
    pub stage1_steps: usize,
    pub stage3_steps: usize,
    pub baseline_steps: usize,
    pub dataset_episodes: usize,
    /// Act with mean actions while collecting the encoder dataset.
    pub dataset_deterministic: bool,
    pub encoder: EncoderTrainConfig,
    /// Stop a training stage once the rolling success rate exceeds this.
    pub early_stop_success: Option<f64>,
    /// Restrict training to these shapes (by name); empty means every seen shape.
    pub train_shapes: Vec<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            trainer: TrainerConfig::default(),
            hidden: HIDDEN,
            stage1_steps: 50_000,
            stage3_steps: 50_000,
            baseline_steps: 50_000,
            dataset_episodes: 2_000,
            dataset_deterministic: false,
            encoder: EncoderTrainConfig::default(),
            early_stop_success: None,
            train_shapes: Vec::new(),
        }
    }
}

impl PipelineConfig {
    /// A few seconds of training with narrow networks and short episodes,
    /// for tests and quick end-to-end checks of the plumbing.
    pub fn smoke() -> Self {
        Self {
            env: EnvConfig {
                episode_len: 20,
                ..EnvConfig::default()
            },
            trainer: TrainerConfig {
                num_envs: 2,
                rollout_len: 8,
                epochs: 2,
                minibatches: 2,
                ..TrainerConfig::default()
            },
            hidden: 16,
            stage1_steps: 24,
            stage3_steps: 24,
            baseline_steps: 24,
            dataset_episodes: 4,
            encoder: EncoderTrainConfig {
                epochs: 2,
                batch_sequences: 4,
                ..EncoderTrainConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DerecoError> {
        self.env.validate()?;
        self.trainer.validate()?;
        self.encoder.validate()?;
        if self.hidden == 0 {
            return Err(DerecoError::Config("hidden width must be positive".into()));
        }
        if self.dataset_episodes == 0 {
            return Err(DerecoError::Config("dataset_episodes must be positive".into()));
        }
        Ok(())
    }

    /// Trainer settings with a given step budget.
    pub fn trainer_for(&self, steps: usize) -> TrainerConfig {
        TrainerConfig {
            total_steps: steps,
            ..self.trainer.clone()
        }
    }
}
