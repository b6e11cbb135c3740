use rand::Rng;
use rand_distr::StandardNormal;

use super::{gaussian_log_prob_row, ActorInput, Agent, MappoError};
use crate::autodiff::{LstmCellState, Tensor};
use crate::rng::StreamRng;
use crate::transportsim::{Action, EpisodeSummary, VecEnv, PRIV_WIDTH};

/// Transitions of `steps × envs × 2 robots`. Flat arrays are row-major in
/// that order; per-environment arrays drop the robot axis.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutBuffer {
    pub steps: usize,
    pub num_envs: usize,
    pub obs_width: usize,
    pub action_dim: usize,
    pub critic_width: usize,
    pub obs: Vec<f64>,
    /// Privileged rows for the actor, one per robot; empty unless the actor
    /// consumes privileged input.
    pub actor_privileged: Vec<f64>,
    pub critic_inputs: Vec<f64>,
    /// Sampled actions before clamping to [-1, 1].
    pub raw_actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub robot_rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Recurrent encoder state before each step; empty for feed-forward actors.
    pub lstm_h: Vec<f64>,
    pub lstm_c: Vec<f64>,
    pub hidden: usize,
    /// Values of the observations that follow the last step.
    pub bootstrap_values: Vec<f64>,
    pub episodes: Vec<EpisodeSummary>,
    /// Robot-mean tracking term summed over all steps and environments.
    pub track_sum: f64,
}

impl RolloutBuffer {
    /// Number of robot-level samples.
    pub fn rows(&self) -> usize {
        self.steps * self.num_envs * 2
    }

    /// Robot-mean reward per (step, env).
    pub fn mean_rewards(&self) -> Vec<f64> {
        self.robot_rewards.chunks(2).map(|r| (r[0] + r[1]) / 2.0).collect()
    }

    /// Mean of the two robot values per (step, env).
    pub fn env_values(&self) -> Vec<f64> {
        self.values.chunks(2).map(|v| (v[0] + v[1]) / 2.0).collect()
    }

    pub fn mean_track_reward(&self) -> f64 {
        self.track_sum / (self.steps * self.num_envs).max(1) as f64
    }

    fn gather(data: &[f64], width: usize, rows: &[usize]) -> Tensor {
        Tensor::stack_rows(rows.iter().map(|&r| &data[r * width..(r + 1) * width]), width)
    }

    pub fn obs_rows(&self, rows: &[usize]) -> Tensor {
        Self::gather(&self.obs, self.obs_width, rows)
    }

    pub fn actor_privileged_rows(&self, rows: &[usize]) -> Option<Tensor> {
        (!self.actor_privileged.is_empty()).then(|| Self::gather(&self.actor_privileged, PRIV_WIDTH, rows))
    }

    pub fn critic_rows(&self, rows: &[usize]) -> Tensor {
        Self::gather(&self.critic_inputs, self.critic_width, rows)
    }

    pub fn action_rows(&self, rows: &[usize]) -> Tensor {
        Self::gather(&self.raw_actions, self.action_dim, rows)
    }

    pub fn lstm_rows(&self, rows: &[usize]) -> Option<LstmCellState> {
        (!self.lstm_h.is_empty()).then(|| LstmCellState {
            h: Self::gather(&self.lstm_h, self.hidden, rows),
            c: Self::gather(&self.lstm_c, self.hidden, rows),
        })
    }
}

/// State carried across rollouts: the recurrent state of every robot and
/// the action-sampling stream.
pub struct Collector {
    pub lstm: Option<LstmCellState>,
    pub rng: StreamRng,
}

impl Collector {
    pub fn new(agent: &Agent, num_envs: usize, rng: StreamRng) -> Self {
        Self {
            lstm: agent
                .is_recurrent()
                .then(|| LstmCellState::zeros(2 * num_envs, agent.spec.actor.hidden)),
            rng,
        }
    }
}

fn observation_batch(envs: &VecEnv) -> Tensor {
    let rows: Vec<Vec<f64>> = envs
        .envs()
        .iter()
        .flat_map(|e| e.obs().iter().map(|o| o.to_vec()).collect::<Vec<_>>())
        .collect();
    Tensor::from_rows(&rows)
}

fn privileged_batch(envs: &VecEnv) -> Result<Tensor, MappoError> {
    let rows = envs
        .envs()
        .iter()
        .map(|e| e.privileged().map(|p| p.to_vec()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Tensor::from_rows(&rows))
}

fn duplicate_rows(t: &Tensor) -> Tensor {
    Tensor::stack_rows((0..2 * t.rows()).map(|r| t.row_slice(r / 2)), t.cols())
}

/// Run the current parameter snapshot for `steps` vectorized steps.
pub fn collect_rollouts(
    envs: &mut VecEnv,
    agent: &Agent,
    collector: &mut Collector,
    steps: usize,
    deterministic: bool,
) -> Result<RolloutBuffer, MappoError> {
    let n = envs.len();
    let actor = &agent.spec.actor;
    let needs_priv = agent.actor_uses_privileged() || agent.critic_uses_privileged();
    let mut buf = RolloutBuffer {
        steps,
        num_envs: n,
        obs_width: actor.obs_width,
        action_dim: actor.action_dim,
        critic_width: agent.spec.critic.input_width(),
        obs: Vec::new(),
        actor_privileged: Vec::new(),
        critic_inputs: Vec::new(),
        raw_actions: Vec::new(),
        log_probs: Vec::new(),
        values: Vec::new(),
        robot_rewards: Vec::new(),
        dones: Vec::new(),
        lstm_h: Vec::new(),
        lstm_c: Vec::new(),
        hidden: actor.hidden,
        bootstrap_values: Vec::new(),
        episodes: Vec::new(),
        track_sum: 0.0,
    };
    for _ in 0..steps {
        let obs = observation_batch(envs);
        let p_env = if needs_priv {
            Some(privileged_batch(envs)?)
        } else {
            None
        };
        let p_rows = p_env
            .as_ref()
            .filter(|_| agent.actor_uses_privileged())
            .map(duplicate_rows);
        let input = ActorInput {
            obs: &obs,
            privileged: p_rows.as_ref(),
            state: collector.lstm.as_ref(),
            g_override: None,
        };
        let policy = agent.act(input)?;
        let std: Vec<f64> = policy.log_std.iter().map(|l| l.exp()).collect();
        let mut actions: Vec<[Action; 2]> = vec![[[0.0; 6]; 2]; n];
        for r in 0..2 * n {
            let mean = policy.mean.row_slice(r);
            let raw: Vec<f64> = if deterministic {
                mean.to_vec()
            } else {
                mean.iter()
                    .zip(&std)
                    .map(|(m, s)| m + s * collector.rng.sample::<f64, _>(StandardNormal))
                    .collect()
            };
            buf.log_probs.push(gaussian_log_prob_row(mean, &policy.log_std, &raw));
            for (k, v) in raw.iter().enumerate() {
                actions[r / 2][r % 2][k] = v.clamp(-1.0, 1.0);
            }
            buf.raw_actions.extend_from_slice(&raw);
        }
        let critic_in = agent.critic_input(&obs, p_env.as_ref())?;
        buf.values.extend(agent.values(&critic_in)?);
        buf.obs.extend_from_slice(obs.data());
        buf.critic_inputs.extend_from_slice(critic_in.data());
        if let Some(p) = &p_rows {
            buf.actor_privileged.extend_from_slice(p.data());
        }
        if let Some(s) = &collector.lstm {
            buf.lstm_h.extend_from_slice(s.h.data());
            buf.lstm_c.extend_from_slice(s.c.data());
        }

        let out = envs.step(&actions)?;
        for r in &out.rewards {
            buf.robot_rewards.extend([r[0].total, r[1].total]);
            buf.track_sum += (r[0].track + r[1].track) / 2.0;
        }
        buf.dones.extend_from_slice(&out.dones);
        buf.episodes.extend(out.finished);
        if let Some(mut next) = policy.next_state {
            for (e, &done) in out.dones.iter().enumerate() {
                if done {
                    next.reset_row(2 * e);
                    next.reset_row(2 * e + 1);
                }
            }
            collector.lstm = Some(next);
        }
    }
    let obs = observation_batch(envs);
    let p_env = if agent.critic_uses_privileged() {
        Some(privileged_batch(envs)?)
    } else {
        None
    };
    buf.bootstrap_values = agent.values(&agent.critic_input(&obs, p_env.as_ref())?)?;
    Ok(buf)
}
