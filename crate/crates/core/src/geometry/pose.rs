//! Roll-pitch-yaw pose algebra.
//!
//! Rotations use the fixed-axis convention `R = Rz(yaw) · Ry(pitch) · Rx(roll)`.
//! Angles are stored wrapped to `[-π, π)`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

pub type Point3 = Vector3<f64>;

/// Largest pitch magnitude the rpy parametrization is used at. The operating
/// envelope is ±15°, far from the gimbal singularity at ±π/2.
pub const MAX_PITCH: f64 = 1.0;

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut r = theta - two_pi * ((theta + PI) / two_pi).floor();
    if r >= PI {
        r -= two_pi;
    }
    if r < -PI {
        r += two_pi;
    }
    r
}

/// A 6-DoF pose `(x, y, z, roll, pitch, yaw)` in meters and radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 6]", into = "[f64; 6]")]
pub struct Pose6 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl From<[f64; 6]> for Pose6 {
    fn from(v: [f64; 6]) -> Self {
        Pose6::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }
}

impl From<Pose6> for [f64; 6] {
    fn from(p: Pose6) -> Self {
        p.to_array()
    }
}

impl Default for Pose6 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose6 {
    pub fn new(x: f64, y: f64, z: f64, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            z,
            roll: wrap_angle(roll),
            pitch: wrap_angle(pitch),
            yaw: wrap_angle(yaw),
        }
    }

    pub const fn identity() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            z: 0.0,
            roll: 0.0,
            pitch: 0.0,
            yaw: 0.0,
        }
    }

    pub fn from_translation(t: Point3) -> Self {
        Self::new(t.x, t.y, t.z, 0.0, 0.0, 0.0)
    }

    pub fn from_parts(t: Point3, rot: &Matrix3<f64>) -> Self {
        let (roll, pitch, yaw) = rpy_from_matrix(rot);
        Self::new(t.x, t.y, t.z, roll, pitch, yaw)
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.x, self.y, self.z, self.roll, self.pitch, self.yaw]
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::from(self.to_array())
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn translation(&self) -> Point3 {
        Point3::new(self.x, self.y, self.z)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_from_rpy(self.roll, self.pitch, self.yaw)
    }

    /// Pose of `other`'s frame expressed through `self`: `T_self · T_other`.
    pub fn compose(&self, other: &Pose6) -> Pose6 {
        let r = self.rotation();
        let t = self.translation() + r * other.translation();
        Pose6::from_parts(t, &(r * other.rotation()))
    }

    pub fn inverse(&self) -> Pose6 {
        let rt = self.rotation().transpose();
        Pose6::from_parts(-(rt * self.translation()), &rt)
    }

    /// Rotates then translates `p`.
    pub fn transform_point(&self, p: &Point3) -> Point3 {
        self.rotation() * p + self.translation()
    }

    /// Applies a componentwise increment, wrapping the angles.
    pub fn retract(&self, delta: &[f64]) -> Pose6 {
        Pose6::new(
            self.x + delta[0],
            self.y + delta[1],
            self.z + delta[2],
            self.roll + delta[3],
            self.pitch + delta[4],
            self.yaw + delta[5],
        )
    }
}

pub fn compose(a: &Pose6, b: &Pose6) -> Pose6 {
    a.compose(b)
}

pub fn transform_point(pose: &Pose6, p: &Point3) -> Point3 {
    pose.transform_point(p)
}

/// Componentwise `a − b` with the angular part wrapped to `[-π, π)`.
pub fn pose_difference(a: &Pose6, b: &Pose6) -> Vector6<f64> {
    Vector6::new(
        a.x - b.x,
        a.y - b.y,
        a.z - b.z,
        wrap_angle(a.roll - b.roll),
        wrap_angle(a.pitch - b.pitch),
        wrap_angle(a.yaw - b.yaw),
    )
}

/// Geodesic angle of the relative rotation `Raᵀ·Rb`, in `[0, π]`.
pub fn rotation_angle_between(a: &Pose6, b: &Pose6) -> f64 {
    let rel = a.rotation().transpose() * b.rotation();
    // Axis-angle magnitude from the skew part is better conditioned near 0
    // than arccos of the trace.
    let s = 0.5
        * Vector3::new(
            rel[(2, 1)] - rel[(1, 2)],
            rel[(0, 2)] - rel[(2, 0)],
            rel[(1, 0)] - rel[(0, 1)],
        )
        .norm();
    let c = 0.5 * (rel.trace() - 1.0);
    s.atan2(c)
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn d_rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s)
}

fn d_rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s)
}

fn d_rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
}

pub fn rotation_from_rpy(roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    rot_z(yaw) * rot_y(pitch) * rot_x(roll)
}

/// Partial derivatives of the rotation matrix w.r.t. roll, pitch and yaw.
pub fn rotation_derivatives(roll: f64, pitch: f64, yaw: f64) -> [Matrix3<f64>; 3] {
    let (rx, ry, rz) = (rot_x(roll), rot_y(pitch), rot_z(yaw));
    [
        rz * ry * d_rot_x(roll),
        rz * d_rot_y(pitch) * rx,
        d_rot_z(yaw) * ry * rx,
    ]
}

pub fn rpy_from_matrix(r: &Matrix3<f64>) -> (f64, f64, f64) {
    let pitch = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
    let roll = r[(2, 1)].atan2(r[(2, 2)]);
    let yaw = r[(1, 0)].atan2(r[(0, 0)]);
    (roll, pitch, yaw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn assert_pose_eq(a: &Pose6, b: &Pose6, tol: f64) {
        let d = pose_difference(a, b);
        assert!(d.amax() < tol, "{a:?} vs {b:?}");
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_angle(0.0), 0.0);
        assert_eq!(wrap_angle(PI), -PI);
        assert_abs_diff_eq!(wrap_angle(1.5 * PI), -FRAC_PI_2, epsilon = 1e-15);
        assert_eq!(wrap_angle(-PI), -PI);
    }

    #[test]
    fn compose_examples() {
        let p = Pose6::new(0.1, -0.2, 0.3, 0.05, -0.1, 0.7);
        assert_pose_eq(&Pose6::identity().compose(&p), &p, 1e-15);
        let a = Pose6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let b = Pose6::new(0.0, 2.0, 0.0, 0.0, 0.0, 0.0);
        assert_pose_eq(&a.compose(&b), &Pose6::new(1.0, 2.0, 0.0, 0.0, 0.0, 0.0), 1e-15);
        let yaw = Pose6::new(0.0, 0.0, 0.0, 0.0, 0.0, FRAC_PI_2);
        let x = Pose6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_pose_eq(
            &yaw.compose(&x),
            &Pose6::new(0.0, 1.0, 0.0, 0.0, 0.0, FRAC_PI_2),
            1e-15,
        );
    }

    #[test]
    fn transform_point_examples() {
        let p = Point3::new(1.0, 2.0, 3.0);
        assert_eq!(Pose6::identity().transform_point(&p), p);
        let up = Pose6::new(0.0, 0.0, 5.0, 0.0, 0.0, 0.0);
        assert_eq!(up.transform_point(&Point3::x()), Point3::new(1.0, 0.0, 5.0));
        let yaw = Pose6::new(0.0, 0.0, 0.0, 0.0, 0.0, FRAC_PI_2);
        let q = yaw.transform_point(&Point3::x());
        assert_abs_diff_eq!(q, Point3::y(), epsilon = 1e-15);
    }

    #[test]
    fn pose_difference_examples() {
        let a = Pose6::new(0.1, 0.2, 0.3, 0.4, 0.5, 3.0);
        assert_eq!(pose_difference(&a, &a), Vector6::zeros());
        let b = Pose6::new(0.0, 0.0, 0.0, 0.4, 0.5, -3.0);
        let d = pose_difference(&a, &b);
        assert_abs_diff_eq!(d[5], -(2.0 * PI - 6.0), epsilon = 1e-12);
        assert_abs_diff_eq!(d[0], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(d[2], 0.3, epsilon = 1e-15);
    }

    #[test]
    fn rotation_angle_examples() {
        let a = Pose6::new(0.0, 0.0, 0.0, 0.1, -0.2, 0.3);
        assert_eq!(rotation_angle_between(&a, &a), 0.0);
        let b = Pose6::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.1);
        let c = Pose6::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.2);
        assert_abs_diff_eq!(rotation_angle_between(&b, &c), 0.1, epsilon = 1e-14);
    }

    fn angle() -> impl Strategy<Value = f64> {
        -PI..PI
    }

    fn pose() -> impl Strategy<Value = Pose6> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, angle(), -0.99..0.99f64, angle())
            .prop_map(|(x, y, z, r, p, w)| Pose6::new(x, y, z, r, p, w))
    }

    proptest! {
        #[test]
        fn wrap_is_idempotent_and_congruent(t in -10.0 * PI..10.0 * PI) {
            let w = wrap_angle(t);
            prop_assert!((-PI..PI).contains(&w));
            prop_assert_eq!(wrap_angle(w), w);
            let k = ((t - w) / (2.0 * PI)).round();
            prop_assert!((t - w - 2.0 * PI * k).abs() < 1e-12);
        }

        #[test]
        fn compose_with_inverse_is_identity(p in pose()) {
            let id = p.compose(&p.inverse());
            for v in id.to_array() {
                prop_assert!(v.abs() < 1e-12);
            }
        }

        #[test]
        fn rotation_angle_matches_trace_formula(a in pose(), b in pose()) {
            let rel = a.rotation().transpose() * b.rotation();
            let oracle = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
            let got = rotation_angle_between(&a, &b);
            // arccos loses precision near 0 and π; compare where it is well conditioned
            if oracle > 1e-3 && oracle < PI - 1e-3 {
                prop_assert!((got - oracle).abs() < 1e-9);
            }
            prop_assert!((0.0..=PI).contains(&got));
        }

        #[test]
        fn rpy_roundtrip(p in pose()) {
            let (r, pi, y) = rpy_from_matrix(&p.rotation());
            let q = Pose6::new(p.x, p.y, p.z, r, pi, y);
            prop_assert!(pose_difference(&p, &q).amax() < 1e-10);
        }
    }

    #[test]
    fn rotation_derivatives_match_finite_differences() {
        let (r, p, y) = (0.3, -0.2, 1.1);
        let d = rotation_derivatives(r, p, y);
        let h = 1e-6;
        let fd = [
            (rotation_from_rpy(r + h, p, y) - rotation_from_rpy(r - h, p, y)) / (2.0 * h),
            (rotation_from_rpy(r, p + h, y) - rotation_from_rpy(r, p - h, y)) / (2.0 * h),
            (rotation_from_rpy(r, p, y + h) - rotation_from_rpy(r, p, y - h)) / (2.0 * h),
        ];
        for k in 0..3 {
            assert!((d[k] - fd[k]).amax() < 1e-8);
        }
    }
}
