use serde::{Deserialize, Serialize};

use super::MappoError;

/// PPO hyperparameters. Step counts are vectorized environment steps: one
/// step advances every environment once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_eps: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub rollout_len: usize,
    pub num_envs: usize,
    pub total_steps: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
    /// Normalize value targets with running return statistics.
    pub value_norm: bool,
    /// Act with the mean action during collection.
    pub deterministic_rollouts: bool,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            clip_eps: 0.2,
            epochs: 4,
            minibatches: 4,
            entropy_coef: 0.005,
            value_coef: 1.0,
            rollout_len: 64,
            num_envs: 32,
            total_steps: 50_000,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            max_grad_norm: 0.5,
            normalize_advantages: true,
            value_norm: true,
            deterministic_rollouts: false,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), MappoError> {
        let bad = |m: String| Err(MappoError::Config(m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda must be in [0, 1], got {}", self.lambda));
        }
        if !(self.clip_eps > 0.0) {
            return bad(format!("clip_eps must be positive, got {}", self.clip_eps));
        }
        if self.epochs == 0 || self.minibatches == 0 || self.rollout_len == 0 || self.num_envs == 0 {
            return bad("epochs, minibatches, rollout_len and num_envs must be positive".into());
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0 && self.max_grad_norm > 0.0) {
            return bad("learning rates and max_grad_norm must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_discount() {
        let mut c = TrainerConfig::default();
        assert!(c.validate().is_ok());
        c.gamma = 0.0;
        assert!(c.validate().is_err());
        c.gamma = 1.0;
        c.lambda = 1.5;
        assert!(c.validate().is_err());
    }
}
