//! Multi-agent PPO with a centralized critic and decentralized actors.
//!
//! Both robots share one actor. The critic scores each robot from the joint
//! observation (plus privileged object information when configured); the
//! environment value is the mean of the two robot values and advantages are
//! computed once per environment step from the robot-mean reward.

mod agent;
mod buffer;
mod config;
mod gae;
mod loss;
mod nets;
mod trainer;
mod update;

pub use agent::{Agent, AgentSpec, PolicyStep};
pub use buffer::{collect_rollouts, Collector, RolloutBuffer};
pub use config::TrainerConfig;
pub use gae::{compute_gae, normalize_advantages, AdvantageBatch};
pub use loss::{
    actor_loss, actor_loss_on_tape, clipped_objective, clipped_value_loss, critic_loss, critic_loss_on_tape,
};
pub use nets::{
    gaussian_entropy, gaussian_log_prob, gaussian_log_prob_row, ActorInput, ActorOutput, ActorSpec, AdaptiveEncoder,
    CriticSpec, EncoderKind, ACTOR_PREFIX, CRITIC_PREFIX, ENCODER_PREFIX, HIDDEN, LOG_STD_BOUNDS, LOG_STD_INIT,
};
pub use trainer::{Control, RunOutcome, Trainer, UpdateMetrics};
pub use update::{buffer_advantages, critic_loss_on_buffer, update, UpdateStats};

use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::transportsim::SimError;

#[derive(Debug, Error)]
pub enum MappoError {
    #[error("config error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("training error: {0}")]
    Training(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
