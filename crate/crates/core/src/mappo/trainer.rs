use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{collect_rollouts, update, Agent, Collector, MappoError, TrainerConfig, UpdateStats};
use crate::autodiff::{AdamConfig, AdamState, AutodiffError, Checkpoint, ParamStore, Tensor};
use crate::rng::{stream, StreamRng};
use crate::transportsim::VecEnv;

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateMetrics {
    /// Vectorized environment steps completed so far.
    pub step: usize,
    /// Mean return of the episodes that finished during this rollout.
    pub mean_episode_reward: Option<f64>,
    /// Robot-mean tracking reward per environment step in this rollout.
    pub track_reward: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub kl: f64,
    pub clip_fraction: f64,
    pub success_rate_rolling: Option<f64>,
    pub episodes: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOutcome {
    pub steps: usize,
    pub updates: usize,
    /// The callback asked to stop before the step budget was spent.
    pub stopped_early: bool,
}

/// Collect-then-update loop over a fixed set of environments.
///
/// After every successful update the parameters are copied aside; a
/// divergent update restores that copy before the error is returned, so
/// `agent` always holds the last stable parameters.
pub struct Trainer {
    pub config: TrainerConfig,
    pub agent: Agent,
    actor_opt: AdamState,
    critic_opt: AdamState,
    envs: VecEnv,
    collector: Collector,
    update_rng: StreamRng,
    steps: usize,
    updates: usize,
    stable: ParamStore,
    log: Option<BufWriter<File>>,
}

fn moments_store(state: &AdamState, params: &ParamStore, prefix: &str) -> Result<ParamStore, AutodiffError> {
    let mut out = ParamStore::new();
    for (kind, map) in [("m", &state.first), ("v", &state.second)] {
        for (name, data) in map {
            let shape = params.get(name)?.shape().to_vec();
            out.insert(format!("{prefix}.{kind}.{name}"), Tensor::new(shape, data.clone())?);
        }
    }
    Ok(out)
}

fn restore_moments(state: &mut AdamState, store: &ParamStore, prefix: &str) {
    for (name, t) in store.iter() {
        let Some(rest) = name.strip_prefix(prefix).and_then(|r| r.strip_prefix('.')) else {
            continue;
        };
        if let Some(p) = rest.strip_prefix("m.") {
            state.first.insert(p.to_string(), t.data().to_vec());
        } else if let Some(p) = rest.strip_prefix("v.") {
            state.second.insert(p.to_string(), t.data().to_vec());
        }
    }
}

impl Trainer {
    pub fn new(agent: Agent, envs: VecEnv, config: TrainerConfig, seed: u64) -> Result<Self, MappoError> {
        config.validate()?;
        let collector = Collector::new(&agent, envs.len(), stream(seed, "action-sampling"));
        let adam = |lr| {
            AdamState::new(AdamConfig {
                lr,
                ..AdamConfig::default()
            })
        };
        Ok(Self {
            actor_opt: adam(config.actor_lr),
            critic_opt: adam(config.critic_lr),
            stable: agent.params.clone(),
            config,
            agent,
            envs,
            collector,
            update_rng: stream(seed, "minibatch"),
            steps: 0,
            updates: 0,
            log: None,
        })
    }

    /// Append metrics to a JSONL file, one object per update.
    pub fn log_to(&mut self, path: &Path) -> Result<(), MappoError> {
        let f = OpenOptions::new().create(true).append(true).open(path)?;
        self.log = Some(BufWriter::new(f));
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn envs(&self) -> &VecEnv {
        &self.envs
    }

    pub fn finished(&self) -> bool {
        self.steps >= self.config.total_steps
    }

    /// One rollout plus one PPO update.
    pub fn iteration(&mut self) -> Result<UpdateMetrics, MappoError> {
        let len = self
            .config
            .rollout_len
            .min(self.config.total_steps.saturating_sub(self.steps))
            .max(1);
        let buffer = collect_rollouts(
            &mut self.envs,
            &self.agent,
            &mut self.collector,
            len,
            self.config.deterministic_rollouts,
        )?;
        let stats = match update(
            &mut self.agent,
            &mut self.actor_opt,
            &mut self.critic_opt,
            &buffer,
            &self.config,
            &mut self.update_rng,
        ) {
            Ok(s) => s,
            Err(e) => {
                self.agent.params = self.stable.clone();
                return Err(e);
            }
        };
        let diverged = self
            .agent
            .params
            .iter()
            .find(|(_, t)| !t.is_finite())
            .map(|(n, _)| n.clone());
        if let Some(name) = diverged {
            self.agent.params = self.stable.clone();
            return Err(MappoError::Training(format!(
                "parameter {name} diverged at step {}",
                self.steps
            )));
        }
        self.stable = self.agent.params.clone();
        self.steps += len;
        self.updates += 1;
        let metrics = self.metrics(
            &buffer.episodes.iter().map(|e| e.reward).collect::<Vec<_>>(),
            buffer.mean_track_reward(),
            &stats,
        );
        if let Some(log) = &mut self.log {
            serde_json::to_writer(&mut *log, &metrics).map_err(std::io::Error::from)?;
            log.write_all(b"\n")?;
            log.flush()?;
        }
        Ok(metrics)
    }

    fn metrics(&self, returns: &[f64], track: f64, stats: &UpdateStats) -> UpdateMetrics {
        UpdateMetrics {
            step: self.steps,
            mean_episode_reward: (!returns.is_empty()).then(|| returns.iter().sum::<f64>() / returns.len() as f64),
            track_reward: track,
            actor_loss: stats.actor_loss,
            critic_loss: stats.critic_loss,
            kl: stats.kl,
            clip_fraction: stats.clip_fraction,
            success_rate_rolling: self.envs.rolling_success(),
            episodes: returns.len(),
        }
    }

    /// Train until the step budget is spent or `on_update` returns
    /// [`Control::Stop`].
    pub fn run(
        &mut self,
        mut on_update: impl FnMut(&UpdateMetrics, &Agent) -> Control,
    ) -> Result<RunOutcome, MappoError> {
        let mut stopped_early = false;
        while !self.finished() {
            let m = self.iteration()?;
            if on_update(&m, &self.agent) == Control::Stop {
                stopped_early = !self.finished();
                break;
            }
        }
        Ok(RunOutcome {
            steps: self.steps,
            updates: self.updates,
            stopped_early,
        })
    }

    /// Adam moments and counters, for resuming.
    pub fn optimizer_checkpoint(&self) -> Result<Checkpoint, MappoError> {
        let mut params = moments_store(&self.actor_opt, &self.agent.params, "actor_opt")?;
        params.merge(&moments_store(&self.critic_opt, &self.agent.params, "critic_opt")?);
        Ok(Checkpoint {
            params,
            metadata: serde_json::json!({
                "steps": self.steps,
                "updates": self.updates,
                "actor_opt_step": self.actor_opt.step,
                "critic_opt_step": self.critic_opt.step,
            }),
        })
    }

    /// Continue from a saved optimizer checkpoint. Environments restart
    /// from fresh episodes.
    pub fn restore_optimizer(&mut self, ckpt: &Checkpoint) -> Result<(), MappoError> {
        let get = |k: &str| {
            ckpt.metadata
                .get(k)
                .and_then(|v| v.as_u64())
                .ok_or_else(|| MappoError::Contract(format!("optimizer checkpoint lacks {k}")))
        };
        self.steps = get("steps")? as usize;
        self.updates = get("updates")? as usize;
        self.actor_opt.step = get("actor_opt_step")?;
        self.critic_opt.step = get("critic_opt_step")?;
        restore_moments(&mut self.actor_opt, &ckpt.params, "actor_opt");
        restore_moments(&mut self.critic_opt, &ckpt.params, "critic_opt");
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::mappo::buffer::tests::small_agent;
    use crate::mappo::EncoderKind;
    use crate::transportsim::{CatalogSelection, EnvConfig, ShapeCatalog};

    fn trainer(seed: u64, total: usize) -> Trainer {
        let cat = Arc::new(ShapeCatalog::builtin());
        let seen = cat.select(CatalogSelection::Seen);
        let envs = VecEnv::new(&EnvConfig::default(), cat, &seen, 2, seed).unwrap();
        let config = TrainerConfig {
            rollout_len: 8,
            num_envs: 2,
            total_steps: total,
            epochs: 2,
            minibatches: 2,
            ..TrainerConfig::default()
        };
        Trainer::new(small_agent(EncoderKind::Privileged, true, seed), envs, config, seed).unwrap()
    }

    #[test]
    fn runs_to_budget_and_logs() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("metrics.jsonl");
        let mut t = trainer(0, 20);
        t.log_to(&log).unwrap();
        let out = t.run(|_, _| Control::Continue).unwrap();
        assert_eq!(
            out,
            RunOutcome {
                steps: 20,
                updates: 3,
                stopped_early: false
            }
        );
        let lines: Vec<UpdateMetrics> = std::fs::read_to_string(&log)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.iter().map(|m| m.step).collect::<Vec<_>>(), vec![8, 16, 20]);
        assert!(lines
            .iter()
            .all(|m| (0.0..=1.0).contains(&m.clip_fraction) && m.kl.is_finite()));
    }

    #[test]
    fn same_seed_same_parameters() {
        let run = || {
            let mut t = trainer(3, 16);
            t.run(|_, _| Control::Continue).unwrap();
            t.agent.params.content_hash("")
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn callback_can_stop_early() {
        let mut t = trainer(1, 64);
        let out = t.run(|_, _| Control::Stop).unwrap();
        assert!(out.stopped_early);
        assert_eq!(out.steps, 8);
    }

    #[test]
    fn optimizer_state_round_trips() {
        let mut t = trainer(2, 16);
        t.iteration().unwrap();
        let ck = t.optimizer_checkpoint().unwrap();
        let mut fresh = trainer(2, 16);
        fresh.agent.params = t.agent.params.clone();
        fresh.restore_optimizer(&ck).unwrap();
        assert_eq!(fresh.steps(), 8);
        assert_eq!(fresh.actor_opt.step, t.actor_opt.step);
        assert_eq!(fresh.actor_opt.first, t.actor_opt.first);
        assert_eq!(fresh.critic_opt.second, t.critic_opt.second);
    }
}
