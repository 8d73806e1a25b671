//! Closest-point queries against segments and ellipses.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::pose::{Point3, Pose6};

/// A 3D segment with distinct endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSegment3 {
    pub a: Point3,
    pub b: Point3,
}

impl LineSegment3 {
    pub fn new(a: Point3, b: Point3) -> Self {
        debug_assert!(a != b, "degenerate segment");
        Self { a, b }
    }

    pub fn midpoint(&self) -> Point3 {
        0.5 * (self.a + self.b)
    }

    pub fn direction(&self) -> Point3 {
        self.b - self.a
    }

    pub fn length(&self) -> f64 {
        self.direction().norm()
    }

    pub fn point_at(&self, t: f64) -> Point3 {
        self.a + t * self.direction()
    }

    /// Segment parameter of the projection of `p`, clamped to `[0, 1]`.
    pub fn project_param(&self, p: &Point3) -> f64 {
        let d = self.direction();
        ((p - self.a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0)
    }

    pub fn transformed(&self, pose: &Pose6) -> Self {
        Self {
            a: pose.transform_point(&self.a),
            b: pose.transform_point(&self.b),
        }
    }
}

pub fn closest_point_on_segment(p: &Point3, seg: &LineSegment3) -> Point3 {
    seg.point_at(seg.project_param(p))
}

/// Closest pair of points between two segments, `(on_s1, on_s2)`.
pub fn closest_points_between_segments(s1: &LineSegment3, s2: &LineSegment3) -> (Point3, Point3) {
    let d1 = s1.direction();
    let d2 = s2.direction();
    let r = s1.a - s2.a;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    let c = d1.dot(&r);
    let b = d1.dot(&d2);
    let denom = a * e - b * b;
    let mut s = if denom > 1e-14 * a * e {
        ((b * f - c * e) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let mut t = (b * s + f) / e;
    if t < 0.0 {
        t = 0.0;
        s = (-c / a).clamp(0.0, 1.0);
    } else if t > 1.0 {
        t = 1.0;
        s = ((b - c) / a).clamp(0.0, 1.0);
    }
    (s1.point_at(s), s2.point_at(t))
}

/// Closest boundary point of an axis-aligned ellipse centred at the origin of
/// its plane, for a query point in that plane. Returns `(x, y)` on the curve.
///
/// The query at the exact centre is ill-conditioned; the parameter-0 point
/// `(a, 0)` is returned.
pub fn closest_point_on_ellipse_2d(px: f64, py: f64, a: f64, b: f64) -> (f64, f64) {
    if px == 0.0 && py == 0.0 {
        return (a, 0.0);
    }
    let (sx, sy) = (sign(px), sign(py));
    let (qx, qy) = (px.abs(), py.abs());
    let t = if qy == 0.0 || qx == 0.0 {
        axis_param(qx, qy, a, b)
    } else {
        newton_param(qx, qy, a, b)
    };
    (sx * a * t.cos(), sy * b * t.sin())
}

fn sign(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

// Query on a symmetry axis: either the axis vertex or, inside the evolute, an
// off-axis stationary point; pick whichever is closer.
fn axis_param(qx: f64, qy: f64, a: f64, b: f64) -> f64 {
    let mut candidates = vec![0.0, FRAC_PI_2];
    if qy == 0.0 && a > b {
        let c = a * qx / (a * a - b * b);
        if c < 1.0 {
            candidates.push(c.acos());
        }
    }
    if qx == 0.0 && b > a {
        let s = b * qy / (b * b - a * a);
        if s < 1.0 {
            candidates.push(s.asin());
        }
    }
    let dist = |t: f64| (a * t.cos() - qx).hypot(b * t.sin() - qy);
    candidates
        .into_iter()
        .min_by(|x, y| dist(*x).total_cmp(&dist(*y)))
        .unwrap_or(0.0)
}

// Safeguarded Newton on the stationarity condition (e(t) − q)·e'(t) = 0 over
// the first quadrant, where f(0) < 0 < f(π/2).
fn newton_param(qx: f64, qy: f64, a: f64, b: f64) -> f64 {
    let k = b * b - a * a;
    let f = |t: f64| {
        let (s, c) = t.sin_cos();
        k * s * c + a * qx * s - b * qy * c
    };
    let df = |t: f64| {
        let (s, c) = t.sin_cos();
        k * (c * c - s * s) + a * qx * c + b * qy * s
    };
    let (mut lo, mut hi) = (0.0, FRAC_PI_2);
    let mut t = (a * qy).atan2(b * qx);
    for _ in 0..200 {
        let ft = f(t);
        if ft == 0.0 {
            return t;
        }
        if ft < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let d = df(t);
        let mut next = if d != 0.0 { t - ft / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - t).abs();
        t = next;
        if step < 1e-12 || hi - lo < 1e-12 {
            break;
        }
    }
    t
}

/// Closest point on the boundary of the ellipse with semi-axes `(a_x, a_y)`
/// lying in the `z = 0` plane of `plane_pose`. The query is first projected
/// into that plane.
pub fn closest_point_on_ellipse(p: &Point3, semi_axes: (f64, f64), plane_pose: &Pose6) -> Point3 {
    let local = plane_pose.inverse().transform_point(p);
    let (x, y) = closest_point_on_ellipse_2d(local.x, local.y, semi_axes.0, semi_axes.1);
    plane_pose.transform_point(&Point3::new(x, y, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn seg(a: [f64; 3], b: [f64; 3]) -> LineSegment3 {
        LineSegment3::new(Point3::from(a), Point3::from(b))
    }

    #[test]
    fn segment_examples() {
        let s = seg([0.0; 3], [10.0, 0.0, 0.0]);
        assert_eq!(
            closest_point_on_segment(&Point3::new(3.0, 4.0, 0.0), &s),
            Point3::new(3.0, 0.0, 0.0)
        );
        assert_eq!(
            closest_point_on_segment(&Point3::new(-2.0, 1.0, 0.0), &s),
            Point3::zeros()
        );
    }

    #[test]
    fn segment_matches_dense_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let s = seg(
                [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            );
            let p = Point3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let n = 1_000_000;
            let best = (0..=n)
                .map(|i| s.point_at(i as f64 / n as f64))
                .min_by(|x, y| (x - p).norm().total_cmp(&(y - p).norm()))
                .unwrap();
            assert!((closest_point_on_segment(&p, &s) - best).norm() < 1e-5);
        }
    }

    #[test]
    fn ellipse_examples() {
        let (x, y) = closest_point_on_ellipse_2d(0.10, 0.0, 0.04, 0.025);
        assert!((x - 0.04).abs() < 1e-15 && y.abs() < 1e-15);
        let (x, y) = closest_point_on_ellipse_2d(0.0, -0.10, 0.04, 0.025);
        assert!(x.abs() < 1e-15 && (y + 0.025).abs() < 1e-15);
        assert_eq!(closest_point_on_ellipse_2d(0.0, 0.0, 0.04, 0.025), (0.04, 0.0));
    }

    fn sweep(px: f64, py: f64, a: f64, b: f64, n: usize) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..n {
            let t = 2.0 * PI * i as f64 / n as f64;
            let (x, y) = (a * t.cos(), b * t.sin());
            let d = (x - px).hypot(y - py);
            if d < best.0 {
                best = (d, x, y);
            }
        }
        (best.1, best.2)
    }

    #[test]
    fn ellipse_matches_dense_sweep() {
        let cases = [(0.05, 0.05), (-0.013, 0.002), (0.01, -0.001), (0.0, 0.01), (0.005, 0.0)];
        for (px, py) in cases {
            let got = closest_point_on_ellipse_2d(px, py, 0.04, 0.025);
            let want = sweep(px, py, 0.04, 0.025, 10_000_000);
            let d_got = (got.0 - px).hypot(got.1 - py);
            let d_want = (want.0 - px).hypot(want.1 - py);
            assert!(d_got <= d_want + 1e-12, "{px},{py}");
            assert!((got.0 - want.0).hypot(got.1 - want.1) < 1e-6, "{px},{py}");
        }
    }

    #[test]
    fn ellipse_in_posed_plane() {
        let plane = Pose6::new(0.1, 0.2, 0.3, 0.1, -0.05, 0.4);
        let q = plane.transform_point(&Point3::new(0.1, 0.0, 0.02));
        let c = closest_point_on_ellipse(&q, (0.04, 0.025), &plane);
        let back = plane.inverse().transform_point(&c);
        assert!((back - Point3::new(0.04, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn segment_pair_crossing() {
        let s1 = seg([-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]);
        let s2 = seg([0.25, -1.0, 0.0], [0.25, 1.0, 0.0]);
        let (p, q) = closest_points_between_segments(&s1, &s2);
        assert!((p - Point3::new(0.25, 0.0, 0.0)).norm() < 1e-15);
        assert!((q - p).norm() < 1e-15);
    }

    proptest! {
        #[test]
        fn segment_result_lies_on_segment(
            a in prop::array::uniform3(-1.0..1.0f64),
            b in prop::array::uniform3(-1.0..1.0f64),
            p in prop::array::uniform3(-2.0..2.0f64),
        ) {
            let s = seg(a, b);
            prop_assume!(s.length() > 1e-6);
            let c = closest_point_on_segment(&Point3::from(p), &s);
            let t = s.project_param(&c);
            prop_assert!((0.0..=1.0).contains(&t));
            prop_assert!((s.point_at(t) - c).norm() < 1e-12);
        }

        #[test]
        fn ellipse_result_on_curve(px in -0.2..0.2f64, py in -0.2..0.2f64,
                                    a in 0.005..0.1f64, b in 0.005..0.1f64) {
            let (x, y) = closest_point_on_ellipse_2d(px, py, a, b);
            prop_assert!(((x / a).powi(2) + (y / b).powi(2) - 1.0).abs() < 1e-9);
        }

        #[test]
        fn segment_pair_no_closer_than_sampling(
            a in prop::array::uniform3(-1.0..1.0f64), b in prop::array::uniform3(-1.0..1.0f64),
            c in prop::array::uniform3(-1.0..1.0f64), d in prop::array::uniform3(-1.0..1.0f64),
        ) {
            let (s1, s2) = (seg(a, b), seg(c, d));
            prop_assume!(s1.length() > 1e-3 && s2.length() > 1e-3);
            let (p, q) = closest_points_between_segments(&s1, &s2);
            let got = (p - q).norm();
            let n = 200;
            for i in 0..=n {
                let x = s1.point_at(i as f64 / n as f64);
                let y = closest_point_on_segment(&x, &s2);
                prop_assert!(got <= (x - y).norm() + 1e-12);
            }
        }
    }
}
