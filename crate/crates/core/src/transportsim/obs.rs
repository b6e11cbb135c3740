use serde::{Deserialize, Serialize};

use super::WorldState;

pub const OBS_WIDTH: usize = 22;

/// Field order and widths of the flattened observation vector.
pub const OBS_LAYOUT: [(&str, usize); 6] = [
    ("prev_action", 6),
    ("extension", 1),
    ("grip", 2),
    ("goal_delta", 3),
    ("obj_rel", 4),
    ("force_ternary", 6),
];

/// Local sensing of one robot. Vectors are expressed in the robot frame,
/// so the two mirrored robots see mirrored worlds identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub prev_action: [f64; 6],
    pub extension: f64,
    /// [gripper closed, holding the object]
    pub grip: [f64; 2],
    /// Goal minus end effector.
    pub goal_delta: [f64; 3],
    /// Object center minus end effector, then object yaw relative to the
    /// robot heading folded into [-pi/2, pi/2).
    pub obj_rel: [f64; 4],
    pub force_ternary: [f64; 6],
}

impl Observation {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(OBS_WIDTH);
        v.extend_from_slice(&self.prev_action);
        v.push(self.extension);
        v.extend_from_slice(&self.grip);
        v.extend_from_slice(&self.goal_delta);
        v.extend_from_slice(&self.obj_rel);
        v.extend_from_slice(&self.force_ternary);
        v
    }
}

fn to_robot_frame(heading: f64, d: [f64; 3]) -> [f64; 3] {
    let (s, c) = heading.sin_cos();
    [c * d[0] + s * d[1], -s * d[0] + c * d[1], d[2]]
}

fn fold_half_turn(a: f64) -> f64 {
    use std::f64::consts::PI;
    (a + PI / 2.0).rem_euclid(PI) - PI / 2.0
}

/// Observation of robot `i`.
pub fn observe(state: &WorldState, i: usize) -> Observation {
    let r = &state.robots[i];
    let ee = r.end_effector();
    let sub = |p: [f64; 3]| [p[0] - ee[0], p[1] - ee[1], p[2] - ee[2]];
    let rel = to_robot_frame(r.heading, sub(state.object.position()));
    Observation {
        prev_action: r.prev_action,
        extension: r.extension,
        grip: [
            f64::from(u8::from(r.grip_closed)),
            f64::from(u8::from(state.object.grasped_by[i])),
        ],
        goal_delta: to_robot_frame(r.heading, sub(state.goal)),
        obj_rel: [rel[0], rel[1], rel[2], fold_half_turn(state.object.theta - r.heading)],
        force_ternary: r.force_ternary,
    }
}
