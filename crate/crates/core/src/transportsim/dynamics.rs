use rand::Rng;
use serde::{Deserialize, Serialize};

use super::state::dist3;
use super::{observe, EnvConfig, ObjectSpec, ObjectState, Observation, RobotState, SimError, WorldState};

pub const ACTION_DIM: usize = 6;

/// `[base forward, base lateral, extension rate, height rate, heading rate, grip]`,
/// each in [-1, 1]. Grip > 0 closes the fingers.
pub type Action = [f64; ACTION_DIM];

/// Per-robot reward terms (unweighted) and their weighted sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub reach: f64,
    pub grasp: f64,
    pub grasp_team: f64,
    pub track: f64,
    pub ori: f64,
    pub total: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepInfo {
    /// The object fell from the grippers (mid-air release or single-handed tip).
    pub drop_event: bool,
    /// Robot lost its grasp through slip or overload.
    pub slipped: [bool; 2],
    pub grasp_engaged: [bool; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub state: WorldState,
    pub obs: [Observation; 2],
    pub rewards: [RewardBreakdown; 2],
    pub done: bool,
    pub info: StepInfo,
}

/// Start of an episode: mirrored robots on either side of the table, the
/// object at the table center, grippers open and a little above the table.
pub fn reset<R: Rng + ?Sized>(rng: &mut R, config: &EnvConfig) -> (WorldState, [Observation; 2]) {
    let [lo, hi] = config.table_height_range;
    let table = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
    let goal_z = match config.goal_above_table {
        Some(dz) => table + dz,
        None => config.goal_height,
    };
    let robot = |x: f64, heading: f64| RobotState {
        pos: [x, 0.0],
        heading,
        extension: config.initial_extension,
        gripper_z: (table + config.initial_gripper_clearance).min(config.max_gripper_height),
        grip_closed: false,
        ever_grasped: false,
        prev_action: [0.0; ACTION_DIM],
        ee_vel: [0.0; 3],
        finger_forces: [[0.0; 3]; 2],
        force_ternary: [0.0; 6],
    };
    let state = WorldState {
        robots: [
            robot(-config.base_start_distance, 0.0),
            robot(config.base_start_distance, std::f64::consts::PI),
        ],
        object: ObjectState {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
            z: table,
            vel: [0.0; 3],
            grasped_by: [false; 2],
        },
        table_height: table,
        goal: [0.0, 0.0, goal_z],
        step: 0,
        team_grasped: false,
        drop_count: 0,
    };
    let obs = [observe(&state, 0), observe(&state, 1)];
    (state, obs)
}

/// Per axis: +1 if the force rose by more than `tau`, -1 if it fell by more
/// than `tau`, else 0.
pub fn discretize_force(prev: [f64; 3], curr: [f64; 3], tau: f64) -> [f64; 3] {
    let mut out = [0.0; 3];
    for k in 0..3 {
        let d = curr[k] - prev[k];
        out[k] = if d > tau {
            1.0
        } else if d < -tau {
            -1.0
        } else {
            0.0
        };
    }
    out
}

pub fn is_success(state: &WorldState, threshold: f64) -> bool {
    state.goal_distance() < threshold
}

/// Pose that best maps the two object-frame grasp points onto the two
/// gripper positions in the least-squares sense.
fn rigid_fit(q: [[f64; 2]; 2], e: [[f64; 2]; 2]) -> (f64, f64, f64) {
    let u = [q[1][0] - q[0][0], q[1][1] - q[0][1]];
    let v = [e[1][0] - e[0][0], e[1][1] - e[0][1]];
    let theta = (u[0] * v[1] - u[1] * v[0]).atan2(u[0] * v[0] + u[1] * v[1]);
    let (s, c) = theta.sin_cos();
    let cq = [(q[0][0] + q[1][0]) / 2.0, (q[0][1] + q[1][1]) / 2.0];
    let ce = [(e[0][0] + e[1][0]) / 2.0, (e[0][1] + e[1][1]) / 2.0];
    (ce[0] - (c * cq[0] - s * cq[1]), ce[1] - (s * cq[0] + c * cq[1]), theta)
}

fn drop_object(object: &mut ObjectState, table: f64) {
    object.z = table;
    object.grasped_by = [false; 2];
}

fn to_robot_frame(heading: f64, f: [f64; 3]) -> [f64; 3] {
    let (s, c) = heading.sin_cos();
    [c * f[0] + s * f[1], -s * f[0] + c * f[1], f[2]]
}

/// Advance the world by one control period.
pub fn step(
    state: &WorldState,
    actions: &[Action; 2],
    object: &ObjectSpec,
    config: &EnvConfig,
) -> Result<StepOutput, SimError> {
    for (robot, a) in actions.iter().enumerate() {
        if let Some(index) = a.iter().position(|v| !v.is_finite()) {
            return Err(SimError::NonFiniteAction { robot, index });
        }
    }
    let dt = config.dt;
    let g = config.gravity;
    let table = state.table_height;
    let mut next = state.clone();
    let mut info = StepInfo::default();

    // Kinematics.
    let mut accel = [[0.0; 3]; 2];
    let mut ee_prev = [[0.0; 3]; 2];
    for i in 0..2 {
        let a = actions[i].map(|v| v.clamp(-1.0, 1.0));
        let r = &mut next.robots[i];
        ee_prev[i] = r.end_effector();
        let (s, c) = r.heading.sin_cos();
        let speed = config.max_base_speed;
        r.pos[0] += speed * (a[0] * c - a[1] * s) * dt;
        r.pos[1] += speed * (a[0] * s + a[1] * c) * dt;
        r.heading += config.max_turn_rate * a[4] * dt;
        let [elo, ehi] = config.extension_range;
        r.extension = (r.extension + config.max_extension_rate * a[2] * dt).clamp(elo, ehi);
        r.gripper_z = (r.gripper_z + config.max_height_rate * a[3] * dt).clamp(table, config.max_gripper_height);
        r.grip_closed = a[5] > 0.0;
        r.prev_action = a;
        let ee = r.end_effector();
        let vel = [0, 1, 2].map(|k| (ee[k] - ee_prev[i][k]) / dt);
        accel[i] = [0, 1, 2].map(|k| (vel[k] - r.ee_vel[k]) / dt);
        r.ee_vel = vel;
    }
    let ee = [next.robots[0].end_effector(), next.robots[1].end_effector()];

    for i in 0..2 {
        if !next.robots[i].grip_closed {
            next.object.grasped_by[i] = false;
        }
    }
    // Slip while carried.
    if next.object.holders() == 2 {
        let limit = object.friction * g * config.slip_gain;
        for i in 0..2 {
            let a = accel[i];
            if (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt() > limit {
                next.object.grasped_by[i] = false;
                info.slipped[i] = true;
            }
        }
    }
    if next.object.holders() == 2 {
        let (x, y, theta) = rigid_fit(object.grasp_points, [[ee[0][0], ee[0][1]], [ee[1][0], ee[1][1]]]);
        next.object.x = x;
        next.object.y = y;
        next.object.theta = theta;
        next.object.z = ee[0][2].min(ee[1][2]);
        for i in 0..2 {
            if dist3(ee[i], next.object.to_world(object.grasp_points[i])) > config.grasp_radius {
                next.object.grasped_by[i] = false;
                info.slipped[i] = true;
            }
        }
    }
    let mut drag = None;
    if next.object.holders() < 2 && next.object.z > table {
        drop_object(&mut next.object, table);
        info.drop_event = true;
    } else if next.object.holders() == 1 {
        let i = usize::from(next.object.grasped_by[1]);
        let d = [ee[i][0] - ee_prev[i][0], ee[i][1] - ee_prev[i][1]];
        if ee[i][2] > table + config.lift_margin {
            // A single gripper cannot hold the object level: it tips out.
            drop_object(&mut next.object, table);
            info.drop_event = true;
        } else if d[0] != 0.0 || d[1] != 0.0 {
            let load = object.mass * g * config.drag_factor;
            if load > object.friction * config.grip_capacity {
                next.object.grasped_by[i] = false;
                info.slipped[i] = true;
            } else {
                next.object.x += d[0];
                next.object.y += d[1];
                let n = d[0].hypot(d[1]);
                drag = Some((i, [load * d[0] / n, load * d[1] / n, 0.0]));
            }
        }
    }
    if info.drop_event {
        next.drop_count += 1;
    }

    // A grasp lost during this step cannot re-engage until the next one.
    for i in 0..2 {
        let lost = state.object.grasped_by[i] && !next.object.grasped_by[i];
        if !lost && !next.object.grasped_by[i] && next.robots[i].grip_closed {
            let gp = next.object.to_world(object.grasp_points[i]);
            if dist3(ee[i], gp) <= config.grasp_radius {
                next.object.grasped_by[i] = true;
                info.grasp_engaged[i] = true;
            }
        }
    }

    let before = state.object.position();
    let after = next.object.position();
    let vel = [0, 1, 2].map(|k| (after[k] - before[k]) / dt);
    let obj_accel = [0, 1, 2].map(|k| (vel[k] - state.object.vel[k]) / dt);
    next.object.vel = vel;

    let both = next.object.holders() == 2;
    for i in 0..2 {
        let r = &mut next.robots[i];
        let force = if !next.object.grasped_by[i] {
            None
        } else if both {
            let half = object.mass / 2.0;
            Some([half * obj_accel[0], half * obj_accel[1], half * (g + obj_accel[2])])
        } else {
            Some(drag.filter(|&(j, _)| j == i).map_or([0.0; 3], |(_, f)| f))
        };
        let fingers = match force {
            None => [[0.0; 3]; 2],
            Some(f) => {
                let f = to_robot_frame(r.heading, f);
                let half = [f[0] / 2.0, f[1] / 2.0, f[2] / 2.0];
                let n = config.grip_normal_force;
                [[half[0], half[1] + n, half[2]], [half[0], half[1] - n, half[2]]]
            }
        };
        let t0 = discretize_force(r.finger_forces[0], fingers[0], config.force_threshold);
        let t1 = discretize_force(r.finger_forces[1], fingers[1], config.force_threshold);
        r.force_ternary = [t0[0], t0[1], t0[2], t1[0], t1[1], t1[2]];
        r.finger_forces = fingers;
    }

    next.step += 1;
    let rewards = compute_reward(state, &mut next, object, config);
    let obs = [observe(&next, 0), observe(&next, 1)];
    let done = next.step >= config.episode_len;
    Ok(StepOutput {
        state: next,
        obs,
        rewards,
        done,
        info,
    })
}

/// Reward terms for the transition `before -> after`. Also latches the
/// first-grasp flags in `after`, so it must run exactly once per step.
pub fn compute_reward(
    before: &WorldState,
    after: &mut WorldState,
    object: &ObjectSpec,
    config: &EnvConfig,
) -> [RewardBreakdown; 2] {
    let w = &config.reward_weights;
    let both = after.object.holders() == 2;
    let grasp_team = if both && !before.team_grasped { 1.0 } else { 0.0 };
    after.team_grasped |= both;
    let track = -after.goal_distance();
    let ori = -(after.robots[0].gripper_z - after.robots[1].gripper_z).abs();
    let mut out = [RewardBreakdown::default(); 2];
    for i in 0..2 {
        let holding = after.object.grasped_by[i];
        let reach = if holding {
            0.0
        } else {
            -dist3(after.robots[i].end_effector(), after.grasp_point(object, i))
        };
        let grasp = if holding && !before.robots[i].ever_grasped {
            1.0
        } else {
            0.0
        };
        after.robots[i].ever_grasped |= holding;
        let total = w.reach * reach + w.grasp * grasp + w.grasp_team * grasp_team + w.track * track + w.ori * ori;
        out[i] = RewardBreakdown {
            reach,
            grasp,
            grasp_team,
            track,
            ori,
            total,
        };
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    None,
    GraspAndLift,
    PostLiftDrop,
    Transport,
}

impl FailureKind {
    pub const FAILURES: [FailureKind; 3] = [Self::GraspAndLift, Self::PostLiftDrop, Self::Transport];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::GraspAndLift => "grasp_and_lift",
            Self::PostLiftDrop => "post_lift_drop",
            Self::Transport => "transport",
        }
    }
}

/// Incremental bookkeeping behind the failure taxonomy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureTracker {
    pub lifted: bool,
    pub dropped_after_lift: bool,
}

impl FailureTracker {
    /// Feed the state reached by a step and that step's drop flag.
    pub fn record(&mut self, after: &WorldState, drop_event: bool, lift_margin: f64) {
        if drop_event && self.lifted {
            self.dropped_after_lift = true;
        }
        if after.object.z > after.table_height + lift_margin {
            self.lifted = true;
        }
    }

    pub fn classify(&self, success: bool) -> FailureKind {
        if success {
            FailureKind::None
        } else if !self.lifted {
            FailureKind::GraspAndLift
        } else if self.dropped_after_lift {
            FailureKind::PostLiftDrop
        } else {
            FailureKind::Transport
        }
    }
}

/// Label an episode from its final state and tracker.
pub fn classify_failure(final_state: &WorldState, tracker: &FailureTracker, config: &EnvConfig) -> FailureKind {
    tracker.classify(is_success(final_state, config.success_threshold))
}
