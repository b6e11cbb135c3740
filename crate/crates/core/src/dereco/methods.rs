use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DerecoError;
use crate::mappo::{ActorSpec, AgentSpec, CriticSpec, EncoderKind};
use crate::transportsim::{ACTION_DIM, OBS_WIDTH, PRIV_WIDTH};

/// The proposed method and the five baselines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "dereco")]
    Dereco,
    #[serde(rename = "mappo-wo-pi")]
    MappoWoPi,
    #[serde(rename = "mappo-wo-pi-lstm")]
    MappoWoPiLstm,
    #[serde(rename = "mappo-wo-ae")]
    MappoWoAe,
    #[serde(rename = "mappo-wo-ae-lstm")]
    MappoWoAeLstm,
    #[serde(rename = "mappo-w-pi")]
    MappoWPi,
}

pub const METHODS: [Method; 6] = [
    Method::Dereco,
    Method::MappoWoPi,
    Method::MappoWoPiLstm,
    Method::MappoWoAe,
    Method::MappoWoAeLstm,
    Method::MappoWPi,
];

impl Method {
    /// Identifier used on the command line and in file names.
    pub fn id(self) -> &'static str {
        match self {
            Self::Dereco => "dereco",
            Self::MappoWoPi => "mappo-wo-pi",
            Self::MappoWoPiLstm => "mappo-wo-pi-lstm",
            Self::MappoWoAe => "mappo-wo-ae",
            Self::MappoWoAeLstm => "mappo-wo-ae-lstm",
            Self::MappoWPi => "mappo-w-pi",
        }
    }

    /// Name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Self::Dereco => "DeReCo",
            Self::MappoWoPi => "MAPPO w/o PI",
            Self::MappoWoPiLstm => "MAPPO w/o PI + LSTM",
            Self::MappoWoAe => "MAPPO w/o AE",
            Self::MappoWoAeLstm => "MAPPO w/o AE + LSTM",
            Self::MappoWPi => "MAPPO w PI",
        }
    }

    pub fn spec(self) -> BaselineSpec {
        use EncoderKind::*;
        let (actor, critic_privileged, schedule) = match self {
            Self::Dereco => (FrozenRecurrent, true, Schedule::ThreeStage),
            Self::MappoWoPi => (Observation, false, Schedule::EndToEnd),
            Self::MappoWoPiLstm => (Recurrent, false, Schedule::EndToEnd),
            Self::MappoWoAe => (Observation, true, Schedule::EndToEnd),
            Self::MappoWoAeLstm => (Recurrent, true, Schedule::EndToEnd),
            Self::MappoWPi => (Privileged, true, Schedule::EndToEnd),
        };
        BaselineSpec {
            method: self,
            actor_encoder: actor,
            critic_privileged,
            schedule,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = DerecoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        METHODS.into_iter().find(|m| m.id() == s).ok_or_else(|| {
            let known: Vec<_> = METHODS.iter().map(|m| m.id()).collect();
            DerecoError::Config(format!("unknown method `{s}` (expected one of {})", known.join(", ")))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    EndToEnd,
    /// Privileged training, encoder reconstruction, frozen-encoder retraining.
    ThreeStage,
}

/// Input composition of a method's deployed networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineSpec {
    pub method: Method,
    /// Encoder of the deployed actor (for the three-stage schedule, the
    /// final stage's actor).
    pub actor_encoder: EncoderKind,
    pub critic_privileged: bool,
    pub schedule: Schedule,
}

impl BaselineSpec {
    pub fn agent_spec(&self, hidden: usize) -> AgentSpec {
        agent_spec(self.actor_encoder, self.critic_privileged, hidden)
    }

    /// Whether the deployed actor reads privileged information.
    pub fn actor_privileged(&self) -> bool {
        self.actor_encoder == EncoderKind::Privileged
    }
}

pub fn agent_spec(encoder: EncoderKind, critic_privileged: bool, hidden: usize) -> AgentSpec {
    AgentSpec {
        actor: ActorSpec {
            obs_width: OBS_WIDTH,
            priv_width: if encoder == EncoderKind::Privileged {
                PRIV_WIDTH
            } else {
                0
            },
            hidden,
            action_dim: ACTION_DIM,
            encoder,
        },
        critic: CriticSpec {
            obs_width: OBS_WIDTH,
            priv_width: if critic_privileged { PRIV_WIDTH } else { 0 },
            hidden,
        },
    }
}

/// Stage-1 networks: privileged FC encoder in the actor, privileged critic.
pub fn stage1_spec(hidden: usize) -> AgentSpec {
    agent_spec(EncoderKind::Privileged, true, hidden)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in METHODS {
            assert_eq!(m.id().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_value(m).unwrap(), m.id());
        }
        assert!(matches!("mappo".parse::<Method>(), Err(DerecoError::Config(_))));
    }

    #[test]
    fn input_widths() {
        let w = |m: Method| {
            let s = m.spec().agent_spec(128);
            let actor_in = s.actor.obs_width + s.actor.priv_width;
            (actor_in, s.critic.input_width())
        };
        assert_eq!(w(Method::MappoWoPi), (OBS_WIDTH, 2 * OBS_WIDTH));
        assert_eq!(w(Method::MappoWPi), (OBS_WIDTH + 5, 2 * OBS_WIDTH + 5));
        assert_eq!(w(Method::MappoWoAe), (OBS_WIDTH, 2 * OBS_WIDTH + 5));
        assert_eq!(w(Method::Dereco), (OBS_WIDTH, 2 * OBS_WIDTH + 5));
        assert_eq!(stage1_spec(128).critic.input_width(), 2 * OBS_WIDTH + 5);
        for m in METHODS {
            assert_eq!(m.spec().actor_privileged(), m == Method::MappoWPi);
        }
    }
}
