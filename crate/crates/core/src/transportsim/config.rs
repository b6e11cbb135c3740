use serde::{Deserialize, Serialize};

use super::SimError;

/// Weights of the five reward terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub reach: f64,
    pub grasp: f64,
    pub grasp_team: f64,
    pub track: f64,
    pub ori: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            reach: 3.0,
            grasp: 4.0,
            grasp_team: 7.5,
            track: 20.0,
            ori: 3.0,
        }
    }
}

/// Every environment constant. Units are SI (m, s, kg, N).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub dt: f64,
    pub episode_len: usize,
    pub gravity: f64,
    pub grasp_radius: f64,
    pub force_threshold: f64,
    pub slip_gain: f64,
    pub drag_factor: f64,
    /// Grip force budget; multiplied by friction to get drag capacity.
    pub grip_capacity: f64,
    /// Squeeze force each finger reports while holding.
    pub grip_normal_force: f64,
    pub lift_margin: f64,
    pub success_threshold: f64,
    pub table_height_range: [f64; 2],
    pub goal_height: f64,
    /// When set, the goal sits this far above the sampled table height
    /// instead of at `goal_height`.
    pub goal_above_table: Option<f64>,
    pub mass_range: [f64; 2],
    pub friction_range: [f64; 2],
    pub max_base_speed: f64,
    pub max_turn_rate: f64,
    pub max_extension_rate: f64,
    pub max_height_rate: f64,
    pub extension_range: [f64; 2],
    pub initial_extension: f64,
    /// |x| of each robot base at reset; robots face each other across the table.
    pub base_start_distance: f64,
    pub initial_gripper_clearance: f64,
    pub max_gripper_height: f64,
    pub reward_weights: RewardWeights,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            episode_len: 200,
            gravity: 9.81,
            grasp_radius: 0.05,
            force_threshold: 0.05,
            slip_gain: 1.0,
            drag_factor: 0.5,
            grip_capacity: 6.0,
            grip_normal_force: 5.0,
            lift_margin: 0.02,
            success_threshold: 0.1,
            table_height_range: [0.3, 0.6],
            goal_height: 0.8,
            goal_above_table: None,
            mass_range: [0.2, 1.0],
            friction_range: [0.5, 1.0],
            max_base_speed: 0.3,
            max_turn_rate: 0.5,
            max_extension_rate: 0.2,
            max_height_rate: 0.2,
            extension_range: [0.1, 0.6],
            initial_extension: 0.25,
            base_start_distance: 0.75,
            initial_gripper_clearance: 0.1,
            max_gripper_height: 1.2,
            reward_weights: RewardWeights::default(),
        }
    }
}

impl EnvConfig {
    /// Single shape, fixed 0.2 kg mass, goal 0.05 m above the table.
    pub fn easy() -> Self {
        Self {
            mass_range: [0.2, 0.2],
            goal_above_table: Some(0.05),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("dt", self.dt),
            ("gravity", self.gravity),
            ("grasp_radius", self.grasp_radius),
            ("force_threshold", self.force_threshold),
            ("success_threshold", self.success_threshold),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.episode_len == 0 {
            return Err(SimError::Config("episode_len must be positive".into()));
        }
        for (name, [lo, hi]) in [
            ("table_height_range", self.table_height_range),
            ("mass_range", self.mass_range),
            ("friction_range", self.friction_range),
            ("extension_range", self.extension_range),
        ] {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return Err(SimError::Config(format!("{name} is not an interval: [{lo}, {hi}]")));
            }
        }
        if self.mass_range[0] <= 0.0 {
            return Err(SimError::Config("mass must be positive".into()));
        }
        Ok(())
    }
}
