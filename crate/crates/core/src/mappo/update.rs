use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    actor_loss_on_tape, compute_gae, critic_loss, critic_loss_on_tape, gaussian_entropy, gaussian_log_prob, ActorInput,
    AdvantageBatch, Agent, MappoError, RolloutBuffer, TrainerConfig, ACTOR_PREFIX, CRITIC_PREFIX,
};
use crate::autodiff::{clip_grad_norm, AdamState, Gradients, Tape};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    /// Mean of `log π_old - log π_new` over every minibatch sample.
    pub kl: f64,
    pub clip_fraction: f64,
    /// Mean pre-clipping gradient norms.
    pub actor_grad_norm: f64,
    pub critic_grad_norm: f64,
}

/// Advantages and return targets per (step, env), from the robot-mean reward
/// and the robot-mean value.
pub fn buffer_advantages(buffer: &RolloutBuffer, config: &TrainerConfig) -> Result<AdvantageBatch, MappoError> {
    let (t_len, n) = (buffer.steps, buffer.num_envs);
    let rewards = buffer.mean_rewards();
    let values = buffer.env_values();
    let boot: Vec<f64> = buffer.bootstrap_values.chunks(2).map(|v| (v[0] + v[1]) / 2.0).collect();
    if rewards.len() != t_len * n || values.len() != t_len * n || boot.len() != n {
        return Err(MappoError::Contract(
            "rollout buffer arrays disagree on (steps, envs)".into(),
        ));
    }
    let mut out = AdvantageBatch {
        advantages: vec![0.0; t_len * n],
        returns: vec![0.0; t_len * n],
        normalized: false,
    };
    for e in 0..n {
        let r: Vec<f64> = (0..t_len).map(|t| rewards[t * n + e]).collect();
        let mut v: Vec<f64> = (0..t_len).map(|t| values[t * n + e]).collect();
        v.push(boot[e]);
        let d: Vec<bool> = (0..t_len).map(|t| buffer.dones[t * n + e]).collect();
        let b = compute_gae(&r, &v, &d, config.gamma, config.lambda)?;
        for t in 0..t_len {
            out.advantages[t * n + e] = b.advantages[t];
            out.returns[t * n + e] = b.returns[t];
        }
    }
    if config.normalize_advantages {
        out.normalize();
    }
    Ok(out)
}

fn trainable(agent: &Agent, grads: Gradients) -> Result<Gradients, String> {
    if let Some((name, _)) = grads.iter().find(|(_, g)| !g.is_finite()) {
        return Err(format!("non-finite gradient for {name}"));
    }
    Ok(grads
        .into_iter()
        .filter(|(name, _)| !agent.params.is_frozen(name))
        .collect())
}

/// Full-batch clipped value loss, in normalized value units.
pub fn critic_loss_on_buffer(
    agent: &Agent,
    buffer: &RolloutBuffer,
    adv: &AdvantageBatch,
    eps: f64,
) -> Result<f64, MappoError> {
    let rows: Vec<usize> = (0..buffer.rows()).collect();
    let critic = &agent.spec.critic;
    let (mu, sigma) = critic.value_norm(&agent.params)?;
    let mut tape = Tape::new();
    let v = critic.forward(&mut tape, &agent.params, &buffer.critic_rows(&rows))?;
    let v_new = tape.value(v).data().to_vec();
    let v_old: Vec<f64> = buffer.values.iter().map(|x| (x - mu) / sigma).collect();
    let targets: Vec<f64> = rows.iter().map(|r| (adv.returns[r / 2] - mu) / sigma).collect();
    critic_loss(&v_new, &v_old, &targets, eps)
}

/// PPO epochs over one buffer. Actor and critic use separate tapes,
/// optimizers and gradient clipping, so neither loss reaches the other's
/// parameters.
pub fn update<R: Rng + ?Sized>(
    agent: &mut Agent,
    actor_opt: &mut AdamState,
    critic_opt: &mut AdamState,
    buffer: &RolloutBuffer,
    config: &TrainerConfig,
    rng: &mut R,
) -> Result<UpdateStats, MappoError> {
    let adv = buffer_advantages(buffer, config)?;
    if config.value_norm {
        agent.spec.critic.update_value_norm(&mut agent.params, &adv.returns)?;
    }
    let (mu, sigma) = agent.spec.critic.value_norm(&agent.params)?;
    let eps = config.clip_eps;
    let n = buffer.rows();
    let mb = config.minibatches.min(n).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    let mut batches = 0usize;
    for epoch in 0..config.epochs {
        order.shuffle(rng);
        for m in 0..mb {
            let rows = &order[m * n / mb..(m + 1) * n / mb];
            let fail = |what: &str| MappoError::Training(format!("epoch {epoch}, minibatch {m}: {what}"));
            let advantages: Vec<f64> = rows.iter().map(|r| adv.advantages[r / 2]).collect();
            let old_lp: Vec<f64> = rows.iter().map(|&r| buffer.log_probs[r]).collect();

            let obs = buffer.obs_rows(rows);
            let p = buffer.actor_privileged_rows(rows);
            let state = buffer.lstm_rows(rows);
            let input = ActorInput {
                obs: &obs,
                privileged: p.as_ref(),
                state: state.as_ref(),
                g_override: None,
            };
            let mut tape = Tape::new();
            let out = agent.spec.actor.forward(&mut tape, &agent.params, input)?;
            let lp = gaussian_log_prob(&mut tape, out.mean, out.log_std, &buffer.action_rows(rows))?;
            let ent = gaussian_entropy(&mut tape, out.log_std);
            let loss = actor_loss_on_tape(&mut tape, lp, &old_lp, &advantages, eps, ent, config.entropy_coef)
                .map_err(|e| fail(&e.to_string()))?;
            let loss_value = tape.value(loss).item();
            if !loss_value.is_finite() {
                return Err(fail("non-finite actor loss"));
            }
            let new_lp = tape.value(lp).data().to_vec();
            for (o, nw) in old_lp.iter().zip(&new_lp) {
                stats.kl += o - nw;
                if ((nw - o).exp() - 1.0).abs() > eps {
                    stats.clip_fraction += 1.0;
                }
            }
            stats.entropy += tape.value(ent).item();
            let grads = tape.backward(loss)?;
            let mut g = trainable(agent, tape.param_grads(&grads)).map_err(|e| fail(&e))?;
            debug_assert!(g.keys().all(|k| !k.starts_with(CRITIC_PREFIX)));
            stats.actor_grad_norm += clip_grad_norm(&mut g, config.max_grad_norm);
            actor_opt
                .step(&mut agent.params, &g)
                .map_err(|e| fail(&e.to_string()))?;
            stats.actor_loss += loss_value;

            let mut tape = Tape::new();
            let v = agent
                .spec
                .critic
                .forward(&mut tape, &agent.params, &buffer.critic_rows(rows))?;
            let v_old: Vec<f64> = rows.iter().map(|&r| (buffer.values[r] - mu) / sigma).collect();
            let targets: Vec<f64> = rows.iter().map(|r| (adv.returns[r / 2] - mu) / sigma).collect();
            let closs = critic_loss_on_tape(&mut tape, v, &v_old, &targets, eps)?;
            let closs = tape.scale(closs, config.value_coef);
            let closs_value = tape.value(closs).item();
            if !closs_value.is_finite() {
                return Err(fail("non-finite critic loss"));
            }
            let grads = tape.backward(closs)?;
            let mut g = trainable(agent, tape.param_grads(&grads)).map_err(|e| fail(&e))?;
            debug_assert!(g.keys().all(|k| !k.starts_with(ACTOR_PREFIX)));
            stats.critic_grad_norm += clip_grad_norm(&mut g, config.max_grad_norm);
            critic_opt
                .step(&mut agent.params, &g)
                .map_err(|e| fail(&e.to_string()))?;
            stats.critic_loss += closs_value;
            batches += 1;
        }
    }
    let b = batches.max(1) as f64;
    let samples = (config.epochs * n).max(1) as f64;
    stats.actor_loss /= b;
    stats.critic_loss /= b;
    stats.entropy /= b;
    stats.actor_grad_norm /= b;
    stats.critic_grad_norm /= b;
    stats.kl /= samples;
    stats.clip_fraction /= samples;
    Ok(stats)
}
