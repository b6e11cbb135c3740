//! Actor and critic networks with pluggable input composition.
//!
//! Actor: an encoder branch producing a 128-wide representation `g`, an
//! observation branch over the local observation, a two-layer trunk over
//! their concatenation and a tanh mean head with a state-independent log-std.
//! Critic: a three-layer MLP over the joint input, predicting a normalized
//! value.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{
    Activation, AutodiffError, Dense, LstmCell, LstmCellState, LstmVars, ParamStore, Tape, Tensor, Var,
};

pub const HIDDEN: usize = 128;
pub const LOG_STD_INIT: f64 = -1.203_972_804_325_936; // ln 0.3
pub const LOG_STD_BOUNDS: (f64, f64) = (-5.0, 2.0);

/// Where the actor's representation `g` comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    /// One ReLU FC layer over `[o, p]`.
    Privileged,
    /// One ReLU FC layer over `o`.
    Observation,
    /// LSTM over `o` plus a linear readout, trained with the policy.
    Recurrent,
    /// The same recurrent encoder, frozen; `g` enters the actor as a constant.
    FrozenRecurrent,
}

impl EncoderKind {
    pub fn is_recurrent(self) -> bool {
        matches!(self, Self::Recurrent | Self::FrozenRecurrent)
    }
}

/// LSTM encoder reconstructing a representation from the observation
/// history. Parameters live under `encoder.`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveEncoder {
    pub cell: LstmCell,
    pub readout: Dense,
}

pub const ENCODER_PREFIX: &str = "encoder.";

impl AdaptiveEncoder {
    pub fn new(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            cell: LstmCell::new("encoder.lstm", input, hidden),
            readout: Dense::new("encoder.readout", hidden, output, Activation::Linear),
        }
    }

    pub fn hidden(&self) -> usize {
        self.cell.hidden
    }

    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        self.cell.init(store, rng);
        self.readout.init(store, rng, 1.0);
    }

    /// One step: returns the representation and the next recurrent state.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        state: LstmVars,
    ) -> Result<(Var, LstmVars), AutodiffError> {
        let next = self.cell.forward(tape, store, x, state)?;
        let g = self.readout.forward(tape, store, next.h)?;
        Ok((g, next))
    }

    /// Off-tape step for a batch.
    pub fn step(
        &self,
        store: &ParamStore,
        obs: &Tensor,
        state: &LstmCellState,
    ) -> Result<(Tensor, LstmCellState), AutodiffError> {
        let mut tape = Tape::new();
        let x = tape.constant(obs.clone());
        let s = LstmVars::from_state(&mut tape, state);
        let (g, next) = self.forward(&mut tape, store, x, s)?;
        Ok((tape.value(g).clone(), next.to_state(&tape)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorSpec {
    pub obs_width: usize,
    /// Width of the privileged input; 0 unless the encoder is `Privileged`.
    pub priv_width: usize,
    pub hidden: usize,
    pub action_dim: usize,
    pub encoder: EncoderKind,
}

/// Inputs of one batched actor pass.
#[derive(Clone, Copy, Debug)]
pub struct ActorInput<'a> {
    pub obs: &'a Tensor,
    pub privileged: Option<&'a Tensor>,
    /// Recurrent state before this step (recurrent encoders only).
    pub state: Option<&'a LstmCellState>,
    /// Use this representation instead of running the encoder.
    pub g_override: Option<&'a Tensor>,
}

impl<'a> ActorInput<'a> {
    pub fn new(obs: &'a Tensor) -> Self {
        Self {
            obs,
            privileged: None,
            state: None,
            g_override: None,
        }
    }
}

pub struct ActorOutput {
    /// `[B, action_dim]`, tanh-bounded.
    pub mean: Var,
    /// `[1, action_dim]`, clamped to the log-std bounds.
    pub log_std: Var,
    /// The encoder representation, `[B, hidden]`.
    pub g: Var,
    pub next_state: Option<LstmCellState>,
}

pub const ACTOR_PREFIX: &str = "actor.";

impl ActorSpec {
    pub fn encoder_layer(&self) -> Option<Dense> {
        let input = match self.encoder {
            EncoderKind::Privileged => self.obs_width + self.priv_width,
            EncoderKind::Observation => self.obs_width,
            _ => return None,
        };
        Some(Dense::new("actor.enc", input, self.hidden, Activation::Relu))
    }

    pub fn adaptive_encoder(&self) -> Option<AdaptiveEncoder> {
        self.encoder
            .is_recurrent()
            .then(|| AdaptiveEncoder::new(self.obs_width, self.hidden, self.hidden))
    }

    fn trunk(&self) -> [Dense; 4] {
        let h = self.hidden;
        [
            Dense::new("actor.obs", self.obs_width, h, Activation::Relu),
            Dense::new("actor.fc1", 2 * h, h, Activation::Relu),
            Dense::new("actor.fc2", h, h, Activation::Relu),
            Dense::new("actor.mean", h, self.action_dim, Activation::Tanh),
        ]
    }

    pub fn log_std_name(&self) -> &'static str {
        "actor.log_std"
    }

    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        let gain = 2f64.sqrt();
        if let Some(enc) = self.encoder_layer() {
            enc.init(store, rng, gain);
        }
        if let Some(enc) = self.adaptive_encoder() {
            enc.init(store, rng);
        }
        let [obs, fc1, fc2, mean] = self.trunk();
        obs.init(store, rng, gain);
        fc1.init(store, rng, gain);
        fc2.init(store, rng, gain);
        mean.init(store, rng, 0.01);
        store.insert(self.log_std_name(), Tensor::full(&[1, self.action_dim], LOG_STD_INIT));
        if self.encoder == EncoderKind::FrozenRecurrent {
            store.freeze_prefix(ENCODER_PREFIX);
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        input: ActorInput,
    ) -> Result<ActorOutput, AutodiffError> {
        let obs = tape.constant(input.obs.clone());
        let batch = input.obs.rows();
        let missing = AutodiffError::MissingInput;
        let mut next_state = None;
        let g = if let Some(g) = input.g_override {
            tape.constant(g.clone())
        } else {
            match self.encoder {
                EncoderKind::Privileged => {
                    let p = input.privileged.ok_or_else(|| missing("privileged input"))?;
                    let p = tape.constant(p.clone());
                    let x = tape.concat_cols(&[obs, p])?;
                    self.encoder_layer().expect("fc encoder").forward(tape, store, x)?
                }
                EncoderKind::Observation => self.encoder_layer().expect("fc encoder").forward(tape, store, obs)?,
                EncoderKind::Recurrent => {
                    let state = input.state.ok_or_else(|| missing("recurrent state"))?;
                    let s = LstmVars::from_state(tape, state);
                    let enc = self.adaptive_encoder().expect("recurrent encoder");
                    let (g, next) = enc.forward(tape, store, obs, s)?;
                    next_state = Some(next.to_state(tape));
                    g
                }
                EncoderKind::FrozenRecurrent => {
                    let state = input.state.ok_or_else(|| missing("recurrent state"))?;
                    let enc = self.adaptive_encoder().expect("recurrent encoder");
                    let (g, next) = enc.step(store, input.obs, state)?;
                    next_state = Some(next);
                    tape.constant(g)
                }
            }
        };
        if tape.value(g).dims2() != (batch, self.hidden) {
            return Err(AutodiffError::Shape {
                op: "actor: representation width",
                lhs: tape.value(g).shape().to_vec(),
                rhs: vec![batch, self.hidden],
            });
        }
        let [obs_layer, fc1, fc2, head] = self.trunk();
        let ob = obs_layer.forward(tape, store, obs)?;
        let x = tape.concat_cols(&[g, ob])?;
        let x = fc1.forward(tape, store, x)?;
        let x = fc2.forward(tape, store, x)?;
        let mean = head.forward(tape, store, x)?;
        let ls = tape.param(store, self.log_std_name())?;
        let log_std = tape.clamp(ls, LOG_STD_BOUNDS.0, LOG_STD_BOUNDS.1);
        Ok(ActorOutput {
            mean,
            log_std,
            g,
            next_state,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticSpec {
    pub obs_width: usize,
    pub priv_width: usize,
    pub hidden: usize,
}

pub const CRITIC_PREFIX: &str = "critic.";
const VNORM_MEAN: &str = "critic.vnorm.mean";
const VNORM_STD: &str = "critic.vnorm.std";
const VNORM_COUNT: &str = "critic.vnorm.count";

impl CriticSpec {
    /// `[o_i, o_j, p]`.
    pub fn input_width(&self) -> usize {
        2 * self.obs_width + self.priv_width
    }

    fn layers(&self) -> [Dense; 3] {
        let h = self.hidden;
        [
            Dense::new("critic.fc1", self.input_width(), h, Activation::Relu),
            Dense::new("critic.fc2", h, h, Activation::Relu),
            Dense::new("critic.out", h, 1, Activation::Linear),
        ]
    }

    pub fn init<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        let [a, b, out] = self.layers();
        a.init(store, rng, 2f64.sqrt());
        b.init(store, rng, 2f64.sqrt());
        out.init(store, rng, 1.0);
        store.insert(VNORM_MEAN, Tensor::scalar(0.0));
        store.insert(VNORM_STD, Tensor::scalar(1.0));
        store.insert(VNORM_COUNT, Tensor::scalar(0.0));
        for name in [VNORM_MEAN, VNORM_STD, VNORM_COUNT] {
            store.freeze(name);
        }
    }

    /// Normalized value, `[B, 1]`.
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, input: &Tensor) -> Result<Var, AutodiffError> {
        let mut x = tape.constant(input.clone());
        for layer in self.layers() {
            x = layer.forward(tape, store, x)?;
        }
        Ok(x)
    }

    /// Running return statistics the value head is normalized against.
    pub fn value_norm(&self, store: &ParamStore) -> Result<(f64, f64), AutodiffError> {
        Ok((store.get(VNORM_MEAN)?.item(), store.get(VNORM_STD)?.item()))
    }

    /// Merge a batch of returns into the running statistics.
    pub fn update_value_norm(&self, store: &mut ParamStore, returns: &[f64]) -> Result<(), AutodiffError> {
        if returns.is_empty() {
            return Ok(());
        }
        let (mean, std) = self.value_norm(store)?;
        let count = store.get(VNORM_COUNT)?.item();
        let n = returns.len() as f64;
        let b_mean = returns.iter().sum::<f64>() / n;
        let b_var = returns.iter().map(|r| (r - b_mean).powi(2)).sum::<f64>() / n;
        let total = count + n;
        let delta = b_mean - mean;
        let new_mean = mean + delta * n / total;
        let m2 = if count > 0.0 { std * std * count } else { 0.0 } + b_var * n + delta * delta * count * n / total;
        let new_std = (m2 / total).sqrt().max(1e-2);
        *store.get_mut(VNORM_MEAN)? = Tensor::scalar(new_mean);
        *store.get_mut(VNORM_STD)? = Tensor::scalar(new_std);
        *store.get_mut(VNORM_COUNT)? = Tensor::scalar(total);
        Ok(())
    }

    /// Values in return units.
    pub fn values(&self, store: &ParamStore, input: &Tensor) -> Result<Vec<f64>, AutodiffError> {
        let mut tape = Tape::new();
        let v = self.forward(&mut tape, store, input)?;
        let (mu, sigma) = self.value_norm(store)?;
        Ok(tape.value(v).data().iter().map(|x| x * sigma + mu).collect())
    }
}

/// Log-density of `actions` under the diagonal Gaussian `(mean, exp(log_std))`,
/// one row per sample: `[B, 1]`.
pub fn gaussian_log_prob(tape: &mut Tape, mean: Var, log_std: Var, actions: &Tensor) -> Result<Var, AutodiffError> {
    let d = actions.cols() as f64;
    let a = tape.constant(actions.clone());
    let diff = tape.sub(a, mean)?;
    let neg = tape.scale(log_std, -1.0);
    let inv = tape.exp(neg);
    let z = tape.mul_row(diff, inv)?;
    let sq = tape.square(z);
    let ss = tape.row_sum(sq);
    let quad = tape.scale(ss, -0.5);
    let ls_sum = tape.row_sum(log_std);
    let neg_ls = tape.scale(ls_sum, -1.0);
    let lp = tape.add_row(quad, neg_ls)?;
    Ok(tape.add_scalar(lp, -0.5 * d * (2.0 * std::f64::consts::PI).ln()))
}

/// Entropy of the diagonal Gaussian, `[1, 1]` (independent of the state).
pub fn gaussian_entropy(tape: &mut Tape, log_std: Var) -> Var {
    let d = tape.value(log_std).len() as f64;
    let s = tape.row_sum(log_std);
    tape.add_scalar(s, 0.5 * d * (1.0 + (2.0 * std::f64::consts::PI).ln()))
}

/// Scalar reference for one sample's log-density.
pub fn gaussian_log_prob_row(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    let mut lp = -0.5 * mean.len() as f64 * (2.0 * std::f64::consts::PI).ln();
    for k in 0..mean.len() {
        let z = (action[k] - mean[k]) * (-log_std[k]).exp();
        lp += -0.5 * z * z - log_std[k];
    }
    lp
}
