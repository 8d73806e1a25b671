//! Object and wall models.
//!
//! The object frame sits at the centre of the bottom face with `z` up. The
//! world frame sits at the top centre of the slot; walls occupy
//! `{|x| > slot_width/2, z < 0}` and their inner top edges run along `y`.

use serde::{Deserialize, Serialize};

use super::closest::{closest_point_on_ellipse_2d, closest_point_on_segment, LineSegment3};
use super::pose::{Point3, Pose6};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ShapeKind {
    Rect { width_x: f64, depth_y: f64 },
    Ellip { semi_axis_x: f64, semi_axis_y: f64 },
}

/// Geometric feature an object contact point is constrained to, in the
/// object frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Feature {
    Segment(LineSegment3),
    /// Ellipse boundary in the `z = 0` plane of the frame.
    Ellipse { a: f64, b: f64 },
}

impl Feature {
    pub fn closest_point(&self, p: &Point3) -> Point3 {
        match self {
            Feature::Segment(s) => closest_point_on_segment(p, s),
            Feature::Ellipse { a, b } => {
                let (x, y) = closest_point_on_ellipse_2d(p.x, p.y, *a, *b);
                Point3::new(x, y, 0.0)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectPoint {
    pub id: String,
    pub feature: Feature,
    /// Prior (nominal) position in the object frame.
    pub nominal: Point3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectShape {
    pub shape: ShapeKind,
    pub height_z: f64,
    pub mass_kg: f64,
    /// Suction grasp point on the top face, relative to the top-face centre.
    pub grasp_offset: Point3,
    pub points: Vec<ObjectPoint>,
}

pub const CORNER_IDS: [&str; 4] = ["c1", "c2", "c3", "c4"];

impl ObjectShape {
    /// Bottom corners `c1` front-left, `c2` back-left, `c3` back-right,
    /// `c4` front-right. Empty for curved shapes.
    pub fn corners(&self) -> Vec<(&'static str, Point3)> {
        match self.shape {
            ShapeKind::Rect { width_x, depth_y } => {
                let (hx, hy) = (0.5 * width_x, 0.5 * depth_y);
                vec![
                    ("c1", Point3::new(-hx, -hy, 0.0)),
                    ("c2", Point3::new(-hx, hy, 0.0)),
                    ("c3", Point3::new(hx, hy, 0.0)),
                    ("c4", Point3::new(hx, -hy, 0.0)),
                ]
            }
            ShapeKind::Ellip { .. } => Vec::new(),
        }
    }

    pub fn corner(&self, id: &str) -> Option<Point3> {
        self.corners().into_iter().find(|(c, _)| *c == id).map(|(_, p)| p)
    }

    /// Bottom outline as a closed polygon in the object frame. Ellipses are
    /// sampled with `ellipse_samples` vertices.
    pub fn bottom_outline(&self, ellipse_samples: usize) -> Vec<Point3> {
        match self.shape {
            ShapeKind::Rect { .. } => self.corners().into_iter().map(|(_, p)| p).collect(),
            ShapeKind::Ellip { semi_axis_x, semi_axis_y } => {
                // rotate a unit vector instead of calling cos/sin per sample
                let (ds, dc) = (std::f64::consts::TAU / ellipse_samples as f64).sin_cos();
                let (mut c, mut s) = (1.0f64, 0.0f64);
                (0..ellipse_samples)
                    .map(|_| {
                        let p = Point3::new(semi_axis_x * c, semi_axis_y * s, 0.0);
                        (c, s) = (c * dc - s * ds, s * dc + c * ds);
                        p
                    })
                    .collect()
            }
        }
    }

    /// Object pose relative to the TCP when the suction cup is undeflected.
    pub fn tcp_to_object(&self) -> Pose6 {
        Pose6::new(-self.grasp_offset.x, -self.grasp_offset.y, -self.height_z, 0.0, 0.0, 0.0)
    }

    pub fn point_index(&self, id: &str) -> Option<usize> {
        self.points.iter().position(|p| p.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        let dims_ok = match self.shape {
            ShapeKind::Rect { width_x, depth_y } => width_x > 0.0 && depth_y > 0.0,
            ShapeKind::Ellip { semi_axis_x, semi_axis_y } => semi_axis_x > 0.0 && semi_axis_y > 0.0,
        };
        if !dims_ok || self.height_z <= 0.0 || self.mass_kg <= 0.0 {
            return Err(Error::Config("object dimensions and mass must be positive".into()));
        }
        let expected = match self.shape {
            ShapeKind::Rect { .. } => 4,
            ShapeKind::Ellip { .. } => 2,
        };
        if self.points.len() != expected {
            return Err(Error::Config(format!(
                "object needs exactly {expected} contact points, found {}",
                self.points.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallPoint {
    pub id: String,
    pub side: Side,
    pub nominal: Point3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallModel {
    pub slot_width_x: f64,
    /// Top face extent across the wall (x) and along it (y).
    pub top_width: f64,
    pub length_y: f64,
    /// Depth of the slot floor below the wall tops.
    pub floor_depth: f64,
    pub left_edge: LineSegment3,
    pub right_edge: LineSegment3,
    pub points: Vec<WallPoint>,
}

impl WallModel {
    /// Builds the two inner top edges from slot width and wall length, with
    /// two wall points per wall at the edge midpoints.
    pub fn new(slot_width_x: f64, top_width: f64, length_y: f64, floor_depth: f64) -> Self {
        let edge = |side: Side| {
            let x = side.sign() * 0.5 * slot_width_x;
            LineSegment3::new(
                Point3::new(x, -0.5 * length_y, 0.0),
                Point3::new(x, 0.5 * length_y, 0.0),
            )
        };
        let (left_edge, right_edge) = (edge(Side::Left), edge(Side::Right));
        let points = [("wl1", Side::Left), ("wl2", Side::Left), ("wr1", Side::Right), ("wr2", Side::Right)]
            .into_iter()
            .map(|(id, side)| WallPoint {
                id: id.to_string(),
                side,
                nominal: if side == Side::Left { left_edge.midpoint() } else { right_edge.midpoint() },
            })
            .collect();
        Self { slot_width_x, top_width, length_y, floor_depth, left_edge, right_edge, points }
    }

    pub fn edge(&self, side: Side) -> &LineSegment3 {
        match side {
            Side::Left => &self.left_edge,
            Side::Right => &self.right_edge,
        }
    }

    pub fn point_index(&self, id: &str) -> Option<usize> {
        self.points.iter().position(|p| p.id == id)
    }

    /// Signed distance of `x` past the inner edge plane of `side` (positive
    /// means above the wall top rather than the slot).
    pub fn overhang(&self, side: Side, x: f64) -> f64 {
        side.sign() * x - 0.5 * self.slot_width_x
    }

    /// Which wall top (if any) lies beneath the world point `(x, y)`.
    pub fn wall_under(&self, x: f64, y: f64) -> Option<Side> {
        if y.abs() > 0.5 * self.length_y {
            return None;
        }
        [Side::Left, Side::Right].into_iter().find(|&s| {
            let o = self.overhang(s, x);
            o >= 0.0 && o <= self.top_width
        })
    }

    /// Height of the supporting surface below `(x, y)`: wall top, slot floor,
    /// or `None` outside the fixture.
    pub fn surface_height(&self, x: f64, y: f64) -> Option<f64> {
        if self.wall_under(x, y).is_some() {
            Some(0.0)
        } else if x.abs() < 0.5 * self.slot_width_x && y.abs() <= 0.5 * self.length_y {
            Some(-self.floor_depth)
        } else {
            None
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.slot_width_x > 0.0 && self.top_width > 0.0 && self.length_y > 0.0 && self.floor_depth > 0.0) {
            return Err(Error::Config("wall dimensions must be positive".into()));
        }
        for side in [Side::Left, Side::Right] {
            let e = self.edge(side);
            if (e.a.x - e.b.x).abs() > 1e-12 || (e.a.z - e.b.z).abs() > 1e-12 {
                return Err(Error::Config("inner edges must be parallel to the world y-axis".into()));
            }
            let n = self.points.iter().filter(|p| p.side == side).count();
            if n != 2 {
                return Err(Error::Config(format!("wall {side:?} needs exactly 2 points, found {n}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect() -> ObjectShape {
        ObjectShape {
            shape: ShapeKind::Rect { width_x: 0.08, depth_y: 0.05 },
            height_z: 0.08,
            mass_kg: 0.11,
            grasp_offset: Point3::zeros(),
            points: Vec::new(),
        }
    }

    #[test]
    fn corners_follow_labeling() {
        let s = rect();
        assert_eq!(s.corner("c1"), Some(Point3::new(-0.04, -0.025, 0.0)));
        assert_eq!(s.corner("c3"), Some(Point3::new(0.04, 0.025, 0.0)));
        assert_eq!(s.bottom_outline(8).len(), 4);
    }

    #[test]
    fn wall_surface_regions() {
        let w = WallModel::new(0.084, 0.045, 0.155, 0.01);
        assert!(w.validate().is_ok());
        assert_eq!(w.wall_under(0.05, 0.0), Some(Side::Right));
        assert_eq!(w.wall_under(-0.05, 0.0), Some(Side::Left));
        assert_eq!(w.wall_under(0.0, 0.0), None);
        assert_eq!(w.surface_height(0.0, 0.0), Some(-0.01));
        assert_eq!(w.surface_height(0.05, 0.1), None);
        assert!((w.overhang(Side::Right, 0.054) - 0.012).abs() < 1e-15);
    }

    #[test]
    fn empty_shape_fails_validation() {
        assert!(rect().validate().is_err());
    }
}
