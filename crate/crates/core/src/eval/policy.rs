use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::autodiff::{LstmCellState, Tensor};
use crate::mappo::{ActorInput, Agent};
use crate::rng::StreamRng;
use crate::transportsim::{
    Action, ObjectSpec, PrivilegedInfo, Script, ShapeCatalog, TransportEnv, TRAINING_SHAPE_SLOTS,
};

/// Privileged input for an object outside the training catalog: a uniformly
/// random training-shape one-hot with the object's true mass and friction.
pub fn privileged_input_for_unseen<R: Rng + ?Sized>(
    object: &ObjectSpec,
    rng: &mut R,
) -> Result<PrivilegedInfo, EvalError> {
    if object.seen {
        return Err(EvalError::Contract(format!(
            "`{}` is a seen object; use its true privileged input",
            object.name
        )));
    }
    Ok(PrivilegedInfo::with_slot(
        object,
        rng.gen_range(0..TRAINING_SHAPE_SLOTS),
    ))
}

/// When the random one-hot for unseen objects is drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OneHotMode {
    #[default]
    PerTrial,
    /// One draw per policy and object, reused for every trial.
    PerPolicy,
}

/// Acts in a batch of environments that all start and end together.
pub trait Policy {
    /// Called once the environments are reset for a new batch of episodes.
    fn begin(&mut self, envs: &[TransportEnv]) -> Result<(), EvalError>;
    fn act(&mut self, envs: &[TransportEnv]) -> Result<Vec<[Action; 2]>, EvalError>;
}

/// Something that can produce a fresh [`Policy`] per evaluation batch.
#[derive(Clone, Debug)]
pub enum PolicySource {
    Learned(Agent),
    Scripted(Script),
}

impl PolicySource {
    pub fn instantiate<'a>(
        &'a self,
        catalog: &'a ShapeCatalog,
        deterministic: bool,
        onehot: OneHotMode,
        rng: StreamRng,
    ) -> Box<dyn Policy + 'a> {
        match self {
            Self::Learned(agent) => Box::new(LearnedPolicy::new(agent, catalog, deterministic, onehot, rng)),
            Self::Scripted(s) => Box::new(ScriptedPolicy(*s)),
        }
    }
}

/// Full-state scripted controller.
pub struct ScriptedPolicy(pub Script);

impl Policy for ScriptedPolicy {
    fn begin(&mut self, _: &[TransportEnv]) -> Result<(), EvalError> {
        Ok(())
    }

    fn act(&mut self, envs: &[TransportEnv]) -> Result<Vec<[Action; 2]>, EvalError> {
        Ok(envs
            .iter()
            .map(|e| self.0.actions(e.state(), e.object(), e.config()))
            .collect())
    }
}

/// Decentralized execution of a trained actor. Unless the actor itself
/// takes privileged input, `act` reads nothing but the local observations.
pub struct LearnedPolicy<'a> {
    agent: &'a Agent,
    catalog: &'a ShapeCatalog,
    deterministic: bool,
    onehot: OneHotMode,
    rng: StreamRng,
    fixed_slot: Option<usize>,
    state: Option<LstmCellState>,
    privileged: Option<Tensor>,
}

impl<'a> LearnedPolicy<'a> {
    pub fn new(
        agent: &'a Agent,
        catalog: &'a ShapeCatalog,
        deterministic: bool,
        onehot: OneHotMode,
        rng: StreamRng,
    ) -> Self {
        Self {
            agent,
            catalog,
            deterministic,
            onehot,
            rng,
            fixed_slot: None,
            state: None,
            privileged: None,
        }
    }

    fn privileged_for(&mut self, object: &ObjectSpec) -> Result<PrivilegedInfo, EvalError> {
        if object.seen {
            return Ok(PrivilegedInfo::for_seen(object, self.catalog)?);
        }
        match self.onehot {
            OneHotMode::PerTrial => privileged_input_for_unseen(object, &mut self.rng),
            OneHotMode::PerPolicy => {
                let slot = match self.fixed_slot {
                    Some(s) => s,
                    None => {
                        let s = privileged_input_for_unseen(object, &mut self.rng)?
                            .one_hot
                            .iter()
                            .position(|&v| v == 1.0);
                        *self.fixed_slot.insert(s.expect("one-hot"))
                    }
                };
                Ok(PrivilegedInfo::with_slot(object, slot))
            }
        }
    }
}

impl Policy for LearnedPolicy<'_> {
    fn begin(&mut self, envs: &[TransportEnv]) -> Result<(), EvalError> {
        let n = envs.len();
        self.state = self
            .agent
            .is_recurrent()
            .then(|| LstmCellState::zeros(2 * n, self.agent.spec.actor.hidden));
        self.privileged = None;
        if self.agent.actor_uses_privileged() {
            let mut rows = Vec::with_capacity(2 * n);
            for e in envs {
                let p = self.privileged_for(e.object())?.to_vec();
                rows.push(p.clone());
                rows.push(p);
            }
            self.privileged = Some(Tensor::from_rows(&rows));
        }
        Ok(())
    }

    fn act(&mut self, envs: &[TransportEnv]) -> Result<Vec<[Action; 2]>, EvalError> {
        let rows: Vec<Vec<f64>> = envs.iter().flat_map(|e| e.obs().iter().map(|o| o.to_vec())).collect();
        let obs = Tensor::from_rows(&rows);
        let input = ActorInput {
            obs: &obs,
            privileged: self.privileged.as_ref(),
            state: self.state.as_ref(),
            g_override: None,
        };
        let step = self.agent.act(input)?;
        let std: Vec<f64> = step.log_std.iter().map(|l| l.exp()).collect();
        let mut out = vec![[[0.0; 6]; 2]; envs.len()];
        for r in 0..obs.rows() {
            for (k, m) in step.mean.row_slice(r).iter().enumerate() {
                let a = if self.deterministic {
                    *m
                } else {
                    m + std[k] * self.rng.sample::<f64, _>(StandardNormal)
                };
                out[r / 2][r % 2][k] = a.clamp(-1.0, 1.0);
            }
        }
        if step.next_state.is_some() {
            self.state = step.next_state;
        }
        Ok(out)
    }
}
