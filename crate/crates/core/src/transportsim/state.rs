use serde::{Deserialize, Serialize};

use super::ObjectSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub pos: [f64; 2],
    pub heading: f64,
    pub extension: f64,
    pub gripper_z: f64,
    pub grip_closed: bool,
    /// Set once the robot has held the object at least once this episode.
    pub ever_grasped: bool,
    pub prev_action: [f64; 6],
    /// End-effector velocity over the last step (world frame).
    pub ee_vel: [f64; 3],
    /// Contact force on each finger, robot frame.
    pub finger_forces: [[f64; 3]; 2],
    pub force_ternary: [f64; 6],
}

impl RobotState {
    pub fn end_effector(&self) -> [f64; 3] {
        [
            self.pos[0] + self.extension * self.heading.cos(),
            self.pos[1] + self.extension * self.heading.sin(),
            self.gripper_z,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub z: f64,
    pub vel: [f64; 3],
    pub grasped_by: [bool; 2],
}

impl ObjectState {
    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn holders(&self) -> usize {
        self.grasped_by.iter().filter(|&&g| g).count()
    }

    /// World position of an object-frame planar point, at the object height.
    pub fn to_world(&self, p: [f64; 2]) -> [f64; 3] {
        let (s, c) = self.theta.sin_cos();
        [self.x + c * p[0] - s * p[1], self.y + s * p[0] + c * p[1], self.z]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub robots: [RobotState; 2],
    pub object: ObjectState,
    pub table_height: f64,
    pub goal: [f64; 3],
    pub step: usize,
    /// Both robots have held the object simultaneously at some point.
    pub team_grasped: bool,
    /// Number of drop events (mid-air releases and single-handed tips).
    pub drop_count: usize,
}

impl WorldState {
    /// World position of robot `i`'s assigned grasp point.
    pub fn grasp_point(&self, object: &ObjectSpec, i: usize) -> [f64; 3] {
        self.object.to_world(object.grasp_points[i])
    }

    pub fn goal_distance(&self) -> f64 {
        dist3(self.object.position(), self.goal)
    }
}

pub(crate) fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}
