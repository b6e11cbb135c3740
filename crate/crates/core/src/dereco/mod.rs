//! The three-stage pipeline and the five baselines.
//!
//! Stage 1 trains an actor whose representation `g` comes from a privileged
//! FC encoder over `[o, p]`, next to a critic over `[o_i, o_j, p]`. Stage 2
//! rolls that policy out, records `(o, g)` and fits an LSTM encoder that
//! reconstructs `g` from the observation history alone. Stage 3 swaps the
//! frozen LSTM encoder into the actor, warm-starts every other weight from
//! stage 1 and continues PPO. Baselines train end to end in one stage.

mod artifacts;
mod config;
mod dataset;
mod methods;
mod pipeline;
mod stage2;

use std::path::PathBuf;

pub use artifacts::{
    content_hash, json_hash, load_policy, missing_artifacts, required_artifacts, run_to_dir, RunManifest, RunOptions,
    RunStatus, StageRecord, CONFIG_FILE, ENCODER_CKPT, METRICS, POLICY_CKPT, RUN_MANIFEST, STAGE1_CKPT, STAGE1_METRICS,
    STAGE3_CKPT,
};
pub use config::{EncoderTrainConfig, PipelineConfig};
pub use dataset::{
    collect_encoder_dataset, read_dataset, write_dataset, EncoderDataset, EpisodeObject, Sequence, DATASET_BLOB,
    DATASET_MANIFEST,
};
pub use methods::{agent_spec, stage1_spec, BaselineSpec, Method, Schedule, METHODS};
pub use pipeline::{
    actor_trunk_names, build_baseline, checkpoint_method, derive_seed, policy_checkpoint, run_method, stage1_train,
    stage2_train, stage3_init, stage3_train, train_stage, training_subset, MethodRun, Resume, StageHooks, StageResult,
};
pub use stage2::{
    running_mean_task, shuffle_within_episodes, split_episodes, train_encoder, EncoderModel, EpochRecord, Stage2Report,
};

use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::mappo::MappoError;
use crate::transportsim::SimError;

#[derive(Debug, Error)]
pub enum DerecoError {
    #[error("config error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("{} is incomplete; missing: {}", dir.display(), missing.join(", "))]
    Incomplete { dir: PathBuf, missing: Vec<String> },
    #[error(transparent)]
    Mappo(#[from] MappoError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
