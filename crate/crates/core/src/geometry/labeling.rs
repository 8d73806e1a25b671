//! Ground-truth contact-formation labeling from a known object pose.

use std::collections::{BTreeMap, BTreeSet};

use super::closest::{closest_points_between_segments, LineSegment3};
use super::pose::{Point3, Pose6};
use super::registry::Geometry;
use super::shapes::{Feature, Side};

/// Default corner-to-edge tolerance.
pub const DEFAULT_LABEL_TOL: f64 = 1.5e-3;

/// Largest gap between the bottom face and a wall top still counted as touching.
pub const CONTACT_GAP: f64 = 1e-4;

const ELLIPSE_SAMPLES: usize = 720;

/// Per-wall contact summary for a pose.
#[derive(Debug, Clone, PartialEq)]
pub struct WallContact {
    pub side: Side,
    /// Lowest height of the bottom face over the wall top.
    pub gap: f64,
    /// Largest overhang of the bottom outline past the inner edge.
    pub overhang: f64,
    /// Corners past the edge by more than `-tol`.
    pub corners: BTreeSet<String>,
}

/// Bottom-face points over each wall: outline vertices past the edge plus
/// crossings of outline edges with the edge plane.
pub fn points_over_wall(pose: &Pose6, geom: &Geometry, side: Side) -> Vec<Point3> {
    let (rot, tr) = (pose.rotation(), pose.translation());
    let outline: Vec<Point3> = geom
        .object
        .bottom_outline(ELLIPSE_SAMPLES)
        .iter()
        .map(|p| rot * p + tr)
        .collect();
    let walls = &geom.walls;
    let mut out = Vec::new();
    for i in 0..outline.len() {
        let a = outline[i];
        let b = outline[(i + 1) % outline.len()];
        let (oa, ob) = (walls.overhang(side, a.x), walls.overhang(side, b.x));
        if oa >= 0.0 && a.y.abs() <= 0.5 * walls.length_y {
            out.push(a);
        }
        if (oa < 0.0) != (ob < 0.0) {
            let t = oa / (oa - ob);
            let c = a + t * (b - a);
            if c.y.abs() <= 0.5 * walls.length_y {
                out.push(c);
            }
        }
    }
    out
}

pub fn wall_contacts(pose: &Pose6, geom: &Geometry, tol: f64) -> Vec<WallContact> {
    let mut out = Vec::new();
    for side in [Side::Left, Side::Right] {
        let pts = points_over_wall(pose, geom, side);
        if pts.is_empty() {
            continue;
        }
        let gap = pts.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
        let overhang = pts
            .iter()
            .map(|p| geom.walls.overhang(side, p.x))
            .fold(f64::NEG_INFINITY, f64::max);
        let corners = geom
            .object
            .corners()
            .into_iter()
            .filter(|(_, c)| geom.walls.overhang(side, pose.transform_point(c).x) >= -tol)
            .map(|(id, _)| id.to_string())
            .collect();
        out.push(WallContact { side, gap, overhang, corners });
    }
    out
}

/// Labels the contact formation of `pose`.
///
/// A wall is touched when the part of the bottom face above it is within
/// [`CONTACT_GAP`] of the wall top; the corners overhanging touched walls by
/// more than `-tol` form the signature looked up in the registry. Signatures
/// missing from the registry resolve to the registered formation covering
/// the most of the signature, with edge-flat formations (two corners on one
/// side) first.
pub fn label_cf_groundtruth(pose: &Pose6, geom: &Geometry, tol: f64) -> u32 {
    let touching: Vec<WallContact> = wall_contacts(pose, geom, tol)
        .into_iter()
        .filter(|c| c.gap <= CONTACT_GAP)
        .collect();
    if touching.is_empty() {
        return 0;
    }
    let walls: BTreeSet<Side> = touching.iter().map(|c| c.side).collect();
    let corners: BTreeSet<String> = touching.iter().flat_map(|c| c.corners.iter().cloned()).collect();
    if let Some(id) = geom.registry.find(&walls, &corners) {
        return id;
    }
    let overhang: BTreeMap<Side, f64> = touching.iter().map(|c| (c.side, c.overhang)).collect();
    let corner_side = |id: &str| {
        touching
            .iter()
            .find(|c| c.corners.contains(id))
            .map(|c| c.side)
    };
    geom.registry
        .formations
        .iter()
        .filter(|f| f.cf_id != 0)
        .filter(|f| f.walls.iter().all(|w| walls.contains(w)))
        .filter(|f| f.corners.iter().all(|c| corners.contains(c)))
        .filter(|f| f.corners.iter().all(|c| corner_side(c).is_some_and(|s| f.walls.contains(&s))))
        .max_by(|a, b| {
            let edge_flat = |f: &super::registry::ContactFormationSpec| {
                f.walls
                    .iter()
                    .any(|w| f.corners.iter().filter(|c| corner_side(c) == Some(*w)).count() >= 2)
            };
            let depth = |f: &super::registry::ContactFormationSpec| -> f64 {
                f.walls.iter().map(|w| overhang[w]).sum()
            };
            edge_flat(a)
                .cmp(&edge_flat(b))
                .then(a.corners.len().cmp(&b.corners.len()))
                .then(depth(a).total_cmp(&depth(b)))
                .then(b.cf_id.cmp(&a.cf_id))
        })
        .map(|f| f.cf_id)
        .unwrap_or(0)
}

/// Ground-truth contact points for the pairings of `cf_id`: for each wall
/// point, the point on its wall edge closest to the paired object feature.
pub fn groundtruth_contact_points(pose: &Pose6, geom: &Geometry, cf_id: u32) -> BTreeMap<String, Point3> {
    let mut out = BTreeMap::new();
    let Ok(cf) = geom.registry.get(cf_id) else {
        return out;
    };
    for (oid, wid) in &cf.pairings {
        let (Some(oi), Some(wi)) = (geom.object.point_index(oid), geom.walls.point_index(wid)) else {
            continue;
        };
        let side = geom.walls.points[wi].side;
        let edge = geom.walls.edge(side);
        let p = match geom.object.points[oi].feature {
            Feature::Segment(seg) => closest_points_between_segments(&seg.transformed(pose), edge).1,
            Feature::Ellipse { a, b } => ellipse_edge_contact(pose, a, b, edge, wid),
        };
        out.insert(wid.clone(), p);
    }
    out
}

// Closest approach between a posed ellipse boundary and a wall edge. An
// overhanging ellipse crosses the edge twice; wall points whose id ends in
// '1' take the front (lower y) crossing, others the back one.
fn ellipse_edge_contact(pose: &Pose6, a: f64, b: f64, edge: &LineSegment3, wall_id: &str) -> Point3 {
    let (rot, tr) = (pose.rotation(), pose.translation());
    let dist = |t: f64| {
        let p = rot * Point3::new(a * t.cos(), b * t.sin(), 0.0) + tr;
        let q = super::closest::closest_point_on_segment(&p, edge);
        ((p - q).norm(), q)
    };
    let n = 360;
    let d: Vec<f64> = (0..n).map(|i| dist(std::f64::consts::TAU * i as f64 / n as f64).0).collect();
    let mut minima: Vec<(f64, Point3)> = Vec::new();
    for i in 0..n {
        let (l, r) = (d[(i + n - 1) % n], d[(i + 1) % n]);
        if d[i] <= l && d[i] < r {
            // golden-section refinement inside the bracketing samples
            let h = std::f64::consts::TAU / n as f64;
            let (mut lo, mut hi) = ((i as f64 - 1.0) * h, (i as f64 + 1.0) * h);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..60 {
                let m1 = hi - g * (hi - lo);
                let m2 = lo + g * (hi - lo);
                if dist(m1).0 < dist(m2).0 {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            minima.push(dist(0.5 * (lo + hi)));
        }
    }
    minima.sort_by(|x, y| x.0.total_cmp(&y.0));
    let best = minima.first().map(|m| m.0).unwrap_or(0.0);
    let mut near: Vec<Point3> = minima
        .iter()
        .filter(|m| m.0 <= best + DEFAULT_LABEL_TOL)
        .map(|m| m.1)
        .collect();
    near.sort_by(|p, q| p.y.total_cmp(&q.y));
    let front = wall_id.ends_with('1');
    match (near.first(), near.last()) {
        (Some(f), Some(l)) => {
            if front {
                *f
            } else {
                *l
            }
        }
        _ => edge.midpoint(),
    }
}
