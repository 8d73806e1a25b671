use serde::{Deserialize, Serialize};

use crate::geometry::{Point3, Pose6};

/// Names of the contact-point variables carried by every node.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StateLayout {
    pub wall_points: Vec<String>,
    pub object_points: Vec<String>,
}

impl StateLayout {
    pub fn new(wall_points: Vec<String>, object_points: Vec<String>) -> Self {
        Self { wall_points, object_points }
    }

    /// Variables per node: pose (6) then wall points then object points.
    pub fn dim(&self) -> usize {
        6 + 3 * (self.wall_points.len() + self.object_points.len())
    }

    pub fn offset(&self, point: PointRef) -> usize {
        match point {
            PointRef::Wall(i) => 6 + 3 * i,
            PointRef::Object(i) => 6 + 3 * (self.wall_points.len() + i),
        }
    }

    /// Human-readable name of the variable block containing local column `col`.
    pub fn block_name(&self, col: usize) -> String {
        if col < 6 {
            return "pose".to_string();
        }
        let k = (col - 6) / 3;
        if k < self.wall_points.len() {
            format!("wall point {}", self.wall_points[k])
        } else {
            format!("object point {}", self.object_points[k - self.wall_points.len()])
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "lowercase")]
pub enum PointRef {
    Wall(usize),
    Object(usize),
}

/// Per-timestep optimization variables: the object pose plus contact points
/// (wall points in the world frame, object points in the object frame).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimestepState {
    pub timestamp: f64,
    pub pose: Pose6,
    pub wall_points: Vec<Point3>,
    pub object_points: Vec<Point3>,
}

impl TimestepState {
    pub fn new(timestamp: f64, pose: Pose6, wall_points: Vec<Point3>, object_points: Vec<Point3>) -> Self {
        Self { timestamp, pose, wall_points, object_points }
    }

    pub fn dim(&self) -> usize {
        6 + 3 * (self.wall_points.len() + self.object_points.len())
    }

    pub fn matches(&self, layout: &StateLayout) -> bool {
        self.wall_points.len() == layout.wall_points.len() && self.object_points.len() == layout.object_points.len()
    }

    pub fn point(&self, p: PointRef) -> &Point3 {
        match p {
            PointRef::Wall(i) => &self.wall_points[i],
            PointRef::Object(i) => &self.object_points[i],
        }
    }

    pub fn point_mut(&mut self, p: PointRef) -> &mut Point3 {
        match p {
            PointRef::Wall(i) => &mut self.wall_points[i],
            PointRef::Object(i) => &mut self.object_points[i],
        }
    }

    /// Adds a local increment (same ordering as [`StateLayout`]); angles wrap.
    pub fn retract(&self, delta: &[f64]) -> TimestepState {
        let mut out = self.clone();
        out.pose = self.pose.retract(&delta[..6]);
        let mut k = 6;
        for p in out.wall_points.iter_mut().chain(out.object_points.iter_mut()) {
            *p += Point3::new(delta[k], delta[k + 1], delta[k + 2]);
            k += 3;
        }
        out
    }

    /// Local difference `self ⊖ base`, inverse of [`retract`](Self::retract).
    pub fn local(&self, base: &TimestepState) -> Vec<f64> {
        let mut out: Vec<f64> = crate::geometry::pose_difference(&self.pose, &base.pose).iter().copied().collect();
        for (a, b) in self
            .wall_points
            .iter()
            .chain(self.object_points.iter())
            .zip(base.wall_points.iter().chain(base.object_points.iter()))
        {
            out.extend((a - b).iter());
        }
        out
    }
}
