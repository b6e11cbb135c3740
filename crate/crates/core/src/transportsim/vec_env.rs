use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    reset, sample_object, step, Action, EnvConfig, FailureKind, FailureTracker, ObjectSpec, Observation,
    PrivilegedInfo, RewardBreakdown, ShapeCatalog, SimError, StepOutput, Trace, TraceHeader, TraceStep, WorldState,
};
use crate::rng::{indexed_stream, StreamRng};

/// Outcome of one finished episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub env: usize,
    pub object: String,
    pub shape_id: usize,
    pub success: bool,
    pub failure: FailureKind,
    pub final_distance: f64,
    /// Sum over steps of the robot-mean total reward.
    pub reward: f64,
    /// Sum over steps of the (unweighted) tracking term.
    pub track_reward: f64,
    pub length: usize,
}

/// One environment instance: owns its random stream, the current object and
/// the episode bookkeeping.
pub struct TransportEnv {
    index: usize,
    config: EnvConfig,
    catalog: Arc<ShapeCatalog>,
    subset: Vec<usize>,
    rng: StreamRng,
    object: ObjectSpec,
    state: WorldState,
    obs: [Observation; 2],
    tracker: FailureTracker,
    reward_sum: f64,
    track_sum: f64,
    trace: Option<Trace>,
}

impl TransportEnv {
    /// Environment drawing objects uniformly from `subset` (catalog ids).
    pub fn new(
        index: usize,
        config: EnvConfig,
        catalog: Arc<ShapeCatalog>,
        subset: Vec<usize>,
        mut rng: StreamRng,
    ) -> Result<Self, SimError> {
        config.validate()?;
        let object = sample_object(&mut rng, &catalog, &subset, config.mass_range, config.friction_range)?;
        let (state, obs) = reset(&mut rng, &config);
        Ok(Self {
            index,
            config,
            catalog,
            subset,
            rng,
            object,
            state,
            obs,
            tracker: FailureTracker::default(),
            reward_sum: 0.0,
            track_sum: 0.0,
            trace: None,
        })
    }

    /// Start a new episode with a freshly sampled object.
    pub fn reset(&mut self) -> Result<(), SimError> {
        let c = &self.config;
        let object = sample_object(
            &mut self.rng,
            &self.catalog,
            &self.subset,
            c.mass_range,
            c.friction_range,
        )?;
        self.reset_with(object);
        Ok(())
    }

    /// Start a new episode with a given object.
    pub fn reset_with(&mut self, object: ObjectSpec) {
        let (state, obs) = reset(&mut self.rng, &self.config);
        self.object = object;
        self.state = state;
        self.obs = obs;
        self.tracker = FailureTracker::default();
        self.reward_sum = 0.0;
        self.track_sum = 0.0;
        if self.trace.is_some() {
            self.trace = Some(self.new_trace());
        }
    }

    fn new_trace(&self) -> Trace {
        Trace {
            header: TraceHeader {
                object: self.object.name.clone(),
                mass: self.object.mass,
                friction: self.object.friction,
                success_threshold: self.config.success_threshold,
                lift_margin: self.config.lift_margin,
                initial: self.state.clone(),
            },
            steps: Vec::new(),
        }
    }

    /// Record a trace of the current and subsequent episodes.
    pub fn record_trace(&mut self, on: bool) {
        self.trace = on.then(|| self.new_trace());
    }

    pub fn trace(&self) -> Option<&Trace> {
        self.trace.as_ref()
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn catalog(&self) -> &ShapeCatalog {
        &self.catalog
    }

    pub fn object(&self) -> &ObjectSpec {
        &self.object
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn obs(&self) -> &[Observation; 2] {
        &self.obs
    }

    pub fn tracker(&self) -> &FailureTracker {
        &self.tracker
    }

    pub fn rng_mut(&mut self) -> &mut StreamRng {
        &mut self.rng
    }

    /// Privileged descriptor of the current (seen) object.
    pub fn privileged(&self) -> Result<PrivilegedInfo, SimError> {
        PrivilegedInfo::for_seen(&self.object, &self.catalog)
    }

    /// Advance one step without resetting. The summary is set when the
    /// episode ends.
    pub fn step(&mut self, actions: &[Action; 2]) -> Result<(StepOutput, Option<EpisodeSummary>), SimError> {
        let out = step(&self.state, actions, &self.object, &self.config)?;
        self.tracker
            .record(&out.state, out.info.drop_event, self.config.lift_margin);
        self.reward_sum += (out.rewards[0].total + out.rewards[1].total) / 2.0;
        self.track_sum += out.rewards[0].track;
        self.state = out.state.clone();
        self.obs = out.obs.clone();
        if let Some(trace) = &mut self.trace {
            trace.steps.push(TraceStep {
                step: out.state.step,
                actions: *actions,
                rewards: [out.rewards[0].total, out.rewards[1].total],
                drop_event: out.info.drop_event,
                state: out.state.clone(),
            });
        }
        let summary = out.done.then(|| {
            let success = self.state.goal_distance() < self.config.success_threshold;
            EpisodeSummary {
                env: self.index,
                object: self.object.name.clone(),
                shape_id: self.object.shape_id,
                success,
                failure: self.tracker.classify(success),
                final_distance: self.state.goal_distance(),
                reward: self.reward_sum,
                track_reward: self.track_sum,
                length: self.state.step,
            }
        });
        Ok((out, summary))
    }
}

/// Rewards and episode boundaries of one vectorized step.
#[derive(Clone, Debug, PartialEq)]
pub struct VecStep {
    pub rewards: Vec<[RewardBreakdown; 2]>,
    pub dones: Vec<bool>,
    pub finished: Vec<EpisodeSummary>,
}

/// A batch of independent environments that reset themselves when an
/// episode ends.
pub struct VecEnv {
    envs: Vec<TransportEnv>,
    recent: VecDeque<bool>,
    window: usize,
}

impl VecEnv {
    /// `n` environments; environment `i` draws from stream `(seed, "env", i)`.
    pub fn new(
        config: &EnvConfig,
        catalog: Arc<ShapeCatalog>,
        subset: &[usize],
        n: usize,
        seed: u64,
    ) -> Result<Self, SimError> {
        if n == 0 {
            return Err(SimError::Config("need at least one environment".into()));
        }
        let envs = (0..n)
            .map(|i| {
                let rng = indexed_stream(seed, "env", i as u64);
                TransportEnv::new(i, config.clone(), catalog.clone(), subset.to_vec(), rng)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            envs,
            recent: VecDeque::new(),
            window: 100,
        })
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn envs(&self) -> &[TransportEnv] {
        &self.envs
    }

    pub fn env(&self, i: usize) -> &TransportEnv {
        &self.envs[i]
    }

    pub fn step(&mut self, actions: &[[Action; 2]]) -> Result<VecStep, SimError> {
        if actions.len() != self.envs.len() {
            return Err(SimError::Contract(format!(
                "{} action pairs for {} environments",
                actions.len(),
                self.envs.len()
            )));
        }
        let mut out = VecStep {
            rewards: Vec::with_capacity(self.envs.len()),
            dones: Vec::with_capacity(self.envs.len()),
            finished: Vec::new(),
        };
        for (i, (env, a)) in self.envs.iter_mut().zip(actions).enumerate() {
            let wrap = |e: SimError| SimError::Env {
                env: i,
                source: Box::new(e),
            };
            let (step, summary) = env.step(a).map_err(wrap)?;
            out.rewards.push(step.rewards);
            out.dones.push(step.done);
            if let Some(s) = summary {
                self.recent.push_back(s.success);
                if self.recent.len() > self.window {
                    self.recent.pop_front();
                }
                out.finished.push(s);
                env.reset().map_err(wrap)?;
            }
        }
        Ok(out)
    }

    /// Success rate over the last 100 finished episodes.
    pub fn rolling_success(&self) -> Option<f64> {
        (!self.recent.is_empty()).then(|| self.recent.iter().filter(|&&s| s).count() as f64 / self.recent.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transportsim::CatalogSelection;

    #[test]
    fn auto_reset_and_rolling_rate() {
        let config = EnvConfig {
            episode_len: 3,
            ..EnvConfig::easy()
        };
        let cat = Arc::new(ShapeCatalog::builtin());
        let subset = vec![cat.id_of("bar").unwrap()];
        let mut v = VecEnv::new(&config, cat, &subset, 2, 9).unwrap();
        assert_eq!(v.rolling_success(), None);
        for t in 1..=3 {
            let s = v.step(&[[[0.0; 6]; 2]; 2]).unwrap();
            assert_eq!(s.dones, vec![t == 3; 2]);
        }
        assert_eq!(v.env(0).state().step, 0);
        // Idle robots leave the object 0.05 m under the goal.
        assert_eq!(v.rolling_success(), Some(1.0));
    }

    #[test]
    fn action_count_must_match() {
        let cat = Arc::new(ShapeCatalog::builtin());
        let seen = cat.select(CatalogSelection::Seen);
        let mut v = VecEnv::new(&EnvConfig::default(), cat, &seen, 3, 0).unwrap();
        assert!(v.step(&[[[0.0; 6]; 2]; 2]).is_err());
    }
}
