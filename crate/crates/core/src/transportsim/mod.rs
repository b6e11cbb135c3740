//! Planar two-robot cooperative transport.
//!
//! Two mobile manipulators face each other across a table. Each one drives
//! its base in the plane, extends a one-joint arm, raises or lowers its
//! gripper and opens or closes it. The object rests at the table center and
//! has to be carried jointly to a goal above the table. Physics is
//! kinematic and deterministic; randomness enters only through resets.

mod catalog;
mod config;
mod dynamics;
mod object;
mod obs;
mod scripted;
mod state;
mod trace;
mod vec_env;

pub use catalog::{boundary_distance, is_simple_polygon, CatalogSelection, ShapeCatalog, ShapeDef};
pub use config::{EnvConfig, RewardWeights};
pub use dynamics::{
    classify_failure, compute_reward, discretize_force, is_success, reset, step, Action, FailureKind, FailureTracker,
    RewardBreakdown, StepInfo, StepOutput, ACTION_DIM,
};
pub use object::{
    make_object, sample_object, ObjectSpec, PrivilegedInfo, FRICTION_REF, MASS_REF, PRIV_WIDTH, TRAINING_SHAPE_SLOTS,
};
pub use obs::{observe, Observation, OBS_LAYOUT, OBS_WIDTH};
pub use scripted::Script;
pub use state::{ObjectState, RobotState, WorldState};
pub use trace::{read_trace, write_trace, Trace, TraceHeader, TraceStep};
pub use vec_env::{EpisodeSummary, TransportEnv, VecEnv, VecStep};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config error: {0}")]
    Config(String),
    #[error("robot {robot}: action component {index} is not finite")]
    NonFiniteAction { robot: usize, index: usize },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("env {env}: {source}")]
    Env {
        env: usize,
        #[source]
        source: Box<SimError>,
    },
    #[error("trace line {line}: {message}")]
    Trace { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
