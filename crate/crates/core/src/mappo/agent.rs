use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ActorInput, ActorSpec, CriticSpec, MappoError};
use crate::autodiff::{Checkpoint, LstmCellState, ParamStore, Tape, Tensor};
use crate::transportsim::{OBS_LAYOUT, OBS_WIDTH};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub actor: ActorSpec,
    pub critic: CriticSpec,
}

/// Result of one batched, off-tape actor pass.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyStep {
    pub mean: Tensor,
    pub log_std: Vec<f64>,
    /// Representation produced by the encoder branch.
    pub g: Tensor,
    pub next_state: Option<LstmCellState>,
}

/// Shared actor plus centralized critic, with all parameters in one store
/// under the `actor.`, `encoder.` and `critic.` prefixes.
#[derive(Clone, Debug, PartialEq)]
pub struct Agent {
    pub spec: AgentSpec,
    pub params: ParamStore,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(spec: AgentSpec, rng: &mut R) -> Self {
        let mut params = ParamStore::new();
        spec.actor.init(&mut params, rng);
        spec.critic.init(&mut params, rng);
        Self { spec, params }
    }

    pub fn actor_uses_privileged(&self) -> bool {
        self.spec.actor.priv_width > 0
    }

    pub fn critic_uses_privileged(&self) -> bool {
        self.spec.critic.priv_width > 0
    }

    pub fn is_recurrent(&self) -> bool {
        self.spec.actor.encoder.is_recurrent()
    }

    pub fn act(&self, input: ActorInput) -> Result<PolicyStep, MappoError> {
        let mut tape = Tape::new();
        let out = self.spec.actor.forward(&mut tape, &self.params, input)?;
        Ok(PolicyStep {
            mean: tape.value(out.mean).clone(),
            log_std: tape.value(out.log_std).data().to_vec(),
            g: tape.value(out.g).clone(),
            next_state: out.next_state,
        })
    }

    /// Critic rows `[o_i, o_j, p]` for a batch laid out as consecutive robot
    /// pairs (row `2k` is robot 0, row `2k + 1` robot 1 of pair `k`).
    /// `privileged` has one row per pair.
    pub fn critic_input(&self, obs: &Tensor, privileged: Option<&Tensor>) -> Result<Tensor, MappoError> {
        let ow = self.spec.critic.obs_width;
        let pw = self.spec.critic.priv_width;
        let rows = obs.rows();
        if rows % 2 != 0 || obs.cols() != ow {
            return Err(MappoError::Contract(format!(
                "critic input: bad observation batch {:?}",
                obs.shape()
            )));
        }
        if pw > 0 && privileged.map(|p| p.dims2()) != Some((rows / 2, pw)) {
            return Err(MappoError::Contract(format!(
                "critic input: privileged batch must be [{}, {pw}]",
                rows / 2
            )));
        }
        let mut data = Vec::with_capacity(rows * self.spec.critic.input_width());
        for r in 0..rows {
            data.extend_from_slice(obs.row_slice(r));
            data.extend_from_slice(obs.row_slice(r ^ 1));
            if let Some(p) = privileged.filter(|_| pw > 0) {
                data.extend_from_slice(p.row_slice(r / 2));
            }
        }
        Ok(Tensor::matrix(rows, self.spec.critic.input_width(), data)?)
    }

    /// Values in return units, one per row.
    pub fn values(&self, critic_input: &Tensor) -> Result<Vec<f64>, MappoError> {
        Ok(self.spec.critic.values(&self.params, critic_input)?)
    }

    pub fn to_checkpoint(&self, extra: serde_json::Value) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            metadata: serde_json::json!({
                "agent": self.spec,
                "obs_width": OBS_WIDTH,
                "obs_layout": OBS_LAYOUT.iter().map(|(n, w)| serde_json::json!({"field": n, "width": w})).collect::<Vec<_>>(),
                "extra": extra,
            }),
        }
    }

    /// Rebuild an agent, checking that the recorded observation width matches
    /// this build's environment.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, MappoError> {
        let width = ckpt.metadata.get("obs_width").and_then(|w| w.as_u64());
        if width != Some(OBS_WIDTH as u64) {
            return Err(MappoError::Contract(format!(
                "checkpoint observation width {width:?} does not match environment width {OBS_WIDTH}"
            )));
        }
        let spec: AgentSpec = serde_json::from_value(ckpt.metadata["agent"].clone())
            .map_err(|e| MappoError::Contract(format!("checkpoint agent spec: {e}")))?;
        if spec.actor.obs_width != OBS_WIDTH || spec.critic.obs_width != OBS_WIDTH {
            return Err(MappoError::Contract(format!(
                "checkpoint network widths (actor {}, critic {}) do not match observation width {OBS_WIDTH}",
                spec.actor.obs_width, spec.critic.obs_width
            )));
        }
        Ok(Self {
            spec,
            params: ckpt.params.clone(),
        })
    }
}
