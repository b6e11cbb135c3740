//! Hand-written full-state controllers, used as test oracles and eval
//! reference points. They read the world state directly, so they are not
//! decentralized policies.

use super::{Action, EnvConfig, ObjectSpec, WorldState};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Script {
    /// Approach, grasp, lift and carry to the goal.
    Oracle,
    /// Approach but never close the gripper.
    NeverGrasp,
    /// Like `Oracle`, but robot 1 opens its gripper once the object is
    /// higher than this many centimeters above the table.
    DropAfterLift(u32),
}

fn robot_frame_command(heading: f64, v: [f64; 2], max_speed: f64) -> [f64; 2] {
    let (s, c) = heading.sin_cos();
    [
        ((c * v[0] + s * v[1]) / max_speed).clamp(-1.0, 1.0),
        ((-s * v[0] + c * v[1]) / max_speed).clamp(-1.0, 1.0),
    ]
}

impl Script {
    pub fn actions(self, state: &WorldState, object: &ObjectSpec, config: &EnvConfig) -> [Action; 2] {
        let both = state.object.holders() == 2;
        let mut out = [[0.0; 6]; 2];
        for (i, a) in out.iter_mut().enumerate() {
            let r = &state.robots[i];
            let ee = r.end_effector();
            let (v, dz, close) = if both {
                let dx = state.goal[0] - state.object.x;
                let dy = state.goal[1] - state.object.y;
                ([dx / config.dt, dy / config.dt], state.goal[2] - state.object.z, true)
            } else {
                let gp = state.grasp_point(object, i);
                let (dx, dy, dz) = (gp[0] - ee[0], gp[1] - ee[1], gp[2] - ee[2]);
                let near = dx.hypot(dy) < 0.01 && dz.abs() < 0.01;
                let close = near && self != Script::NeverGrasp;
                // Once holding, wait in place for the partner.
                let hold = state.object.grasped_by[i];
                if hold {
                    ([0.0, 0.0], 0.0, true)
                } else {
                    ([dx / config.dt, dy / config.dt], dz, close)
                }
            };
            let base = robot_frame_command(r.heading, v, config.max_base_speed);
            a[0] = base[0];
            a[1] = base[1];
            a[3] = (dz / (config.max_height_rate * config.dt)).clamp(-1.0, 1.0);
            a[5] = if close { 1.0 } else { -1.0 };
        }
        if let Script::DropAfterLift(cm) = self {
            if both && state.object.z > state.table_height + f64::from(cm) / 100.0 {
                out[1][5] = -1.0;
            }
        }
        out
    }
}
