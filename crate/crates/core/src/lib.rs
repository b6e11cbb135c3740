//! Decoupled representation and coordination learning for two-robot
//! cooperative transport.
//!
//! Modules, bottom-up:
//! - [`autodiff`]: tape-based reverse-mode AD, Adam, finite-difference checks, checkpoints.
//! - [`transportsim`]: planar two-robot transport environment with randomized objects.
//! - [`mappo`]: multi-agent PPO (clipped surrogate, clipped value loss, GAE).
//! - [`dereco`]: the three-stage pipeline and the five baselines.
//! - [`eval`]: success-rate and failure-taxonomy evaluation.

pub mod autodiff;
pub mod dereco;
pub mod eval;
pub mod mappo;
pub mod rng;
pub mod transportsim;
