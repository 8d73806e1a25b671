//! Quasi-static suction-cup deflection against the wall tops and slot floor.
//!
//! The cup deflects by `δ = (dz, roll, pitch)` in the TCP frame with spring
//! energy `½·δᵀ·K·δ`. Bottom-face points may not sink below the surface
//! under them. Each outer iteration linearizes point heights in `δ` and
//! solves the small QP exactly; its multipliers are the vertical contact
//! forces.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::classifier::Wrench6;
use crate::config::ComplianceConfig;
use crate::error::{Error, Result};
use crate::geometry::pose::rotation_derivatives;
use crate::geometry::{Geometry, Point3, Pose6};

/// Largest penetration accepted at convergence.
pub const PENETRATION_TOL: f64 = 1e-8;

const MAX_OUTER: usize = 60;
/// Points further than this above their surface are left out of the QP.
const ACTIVE_MARGIN: f64 = 0.01;
const OUTLINE_SAMPLES: usize = 180;

/// A vertical contact force at a world point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactForce {
    pub point: Point3,
    pub normal_force: f64,
}

impl ContactForce {
    /// Penalty form: force proportional to penetration depth.
    pub fn from_penetration(point: Point3, depth: f64, k_c: f64) -> Self {
        Self { point, normal_force: k_c * depth.max(0.0) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Deflection {
    pub dz: f64,
    pub roll: f64,
    pub pitch: f64,
    pub object_pose: Pose6,
    pub contacts: Vec<ContactForce>,
}

/// Object pose for a TCP pose and cup deflection.
pub fn deflected_pose(tcp: &Pose6, tcp_to_object: &Pose6, d: &[f64; 3]) -> Pose6 {
    let cup = Pose6::new(0.0, 0.0, d[0], d[1], d[2], 0.0);
    tcp.compose(&cup).compose(tcp_to_object)
}

/// Candidate lowest points of the bottom face in the object frame: outline
/// vertices plus crossings of outline edges with the two wall edge planes.
fn support_points(geom: &Geometry, outline: &[Point3], pose: &Pose6) -> Vec<Point3> {
    let (rot, tr) = (pose.rotation(), pose.translation());
    let world: Vec<Point3> = outline.iter().map(|p| rot * p + tr).collect();
    let half = 0.5 * geom.walls.slot_width_x;
    let mut pts = outline.to_vec();
    for i in 0..outline.len() {
        let j = (i + 1) % outline.len();
        for plane in [-half, half] {
            let (a, b) = (world[i].x - plane, world[j].x - plane);
            if (a < 0.0) != (b < 0.0) {
                let t = a / (a - b);
                pts.push(outline[i] + t * (outline[j] - outline[i]));
            }
        }
    }
    pts
}

/// Height of the supporting surface below a world point (wall tops count
/// from the inner edge outward, so a point exactly on the edge is supported).
fn surface_below(geom: &Geometry, p: &Point3) -> f64 {
    let w = &geom.walls;
    if p.x.abs() >= 0.5 * w.slot_width_x - 1e-12 {
        0.0
    } else {
        -w.floor_depth
    }
}

/// Minimum-energy deflection keeping the bottom face above the surfaces.
pub fn solve_deflection(tcp: &Pose6, geom: &Geometry, compliance: &ComplianceConfig) -> Result<Deflection> {
    let t2o = geom.object.tcp_to_object();
    let k = [compliance.k_t[2], compliance.k_r[0], compliance.k_r[1]];
    let mut d = [0.0f64; 3];
    let rot_tcp = tcp.rotation();
    let mut lambdas: Vec<f64> = Vec::new();
    let mut world: Vec<Point3> = Vec::new();
    let outline = geom.object.bottom_outline(OUTLINE_SAMPLES);
    for outer in 0..MAX_OUTER {
        let pose = deflected_pose(tcp, &t2o, &d);
        let cand = support_points(geom, &outline, &pose);
        let mut rows: Vec<([f64; 3], f64)> = Vec::new();
        let mut worst: f64 = 0.0;
        let mut kept_world = Vec::new();
        let drot = rotation_derivatives(d[1], d[2], 0.0);
        let (rot, tr) = (pose.rotation(), pose.translation());
        for p in &cand {
            let wp = rot * p + tr;
            let h = surface_below(geom, &wp);
            let gap = wp.z - h;
            if gap > ACTIVE_MARGIN {
                continue;
            }
            worst = worst.max(-gap);
            // point in the cup frame before deflection
            let q = t2o.transform_point(p);
            let col = |m: &Matrix3<f64>| (rot_tcp * (m * q)).z;
            let a = [(rot_tcp * Vector3::z()).z, col(&drot[0]), col(&drot[1])];
            // a·(δ − δ0) ≥ −gap
            let b = -gap + a[0] * d[0] + a[1] * d[1] + a[2] * d[2];
            rows.push((a, b));
            kept_world.push(wp);
        }
        if outer > 0 && worst < PENETRATION_TOL {
            world = kept_world;
            // recompute multipliers on the final linearization
            lambdas = min_energy_deflection(&rows, &k)?.1;
            break;
        }
        if rows.is_empty() {
            d = [0.0; 3];
            world.clear();
            lambdas.clear();
            break;
        }
        let (nd, lam) = min_energy_deflection(&rows, &k)?;
        d = nd;
        lambdas = lam;
        world = kept_world;
        if outer + 1 == MAX_OUTER {
            return Err(Error::ContactSolver);
        }
    }
    let object_pose = deflected_pose(tcp, &t2o, &d);
    let contacts = world
        .iter()
        .zip(&lambdas)
        .filter(|(_, l)| **l > 0.0)
        .map(|(p, l)| ContactForce { point: *p, normal_force: *l })
        .collect();
    Ok(Deflection { dz: d[0], roll: d[1], pitch: d[2], object_pose, contacts })
}

/// `min ½·δᵀ·diag(k)·δ  s.t. a_i·δ ≥ b_i`, returning `δ` and the
/// multipliers. With `u = diag(k)^½·δ` this is a least-distance problem,
/// solved through its NNLS dual (Lawson and Hanson); at most four
/// multipliers end up positive however many constraints coincide.
fn min_energy_deflection(rows: &[([f64; 3], f64)], k: &[f64; 3]) -> Result<([f64; 3], Vec<f64>)> {
    if rows.is_empty() {
        return Ok(([0.0; 3], Vec::new()));
    }
    let sk = [k[0].sqrt(), k[1].sqrt(), k[2].sqrt()];
    // columns of E = [Gᵀ; hᵀ], G_i = a_i / √k
    let cols: Vec<[f64; 4]> = rows
        .iter()
        .map(|(a, b)| [a[0] / sk[0], a[1] / sk[1], a[2] / sk[2], *b])
        .collect();
    let lam = nnls(&cols, &[0.0, 0.0, 0.0, 1.0]);
    let mut r = [0.0, 0.0, 0.0, -1.0];
    for (c, l) in cols.iter().zip(&lam) {
        for j in 0..4 {
            r[j] += c[j] * l;
        }
    }
    let denom = -r[3];
    if denom <= 1e-300 {
        return Err(Error::ContactSolver);
    }
    let d = [r[0] / denom / sk[0], r[1] / denom / sk[1], r[2] / denom / sk[2]];
    // the dual solution is λ / (1 - hᵀλ); here 1 - hᵀλ = -r₃ = denom
    Ok((d, lam.iter().map(|l| l / denom).collect()))
}

/// Lawson-Hanson active-set NNLS for a 4-row system given by columns.
fn nnls(cols: &[[f64; 4]], f: &[f64; 4]) -> Vec<f64> {
    let m = cols.len();
    let mut x = vec![0.0; m];
    let mut passive: Vec<usize> = Vec::new();
    let scale = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0f64, f64::max);
    let tol = 1e-12 * scale.max(1e-300);
    let residual = |x: &[f64]| {
        let mut r = *f;
        for (c, xi) in cols.iter().zip(x) {
            for j in 0..4 {
                r[j] -= c[j] * xi;
            }
        }
        r
    };
    for _ in 0..3 * m + 10 {
        let r = residual(&x);
        let w = |i: usize| (0..4).map(|j| cols[i][j] * r[j]).sum::<f64>();
        let Some(enter) = (0..m)
            .filter(|i| !passive.contains(i))
            .map(|i| (i, w(i)))
            .filter(|(_, wi)| *wi > tol)
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
        else {
            break;
        };
        passive.push(enter);
        loop {
            let z = passive_lstsq(cols, &passive, f);
            if z.iter().all(|v| *v > 0.0) {
                for (p, v) in passive.iter().zip(&z) {
                    x[*p] = *v;
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (p, v) in passive.iter().zip(&z) {
                if *v <= 0.0 {
                    alpha = alpha.min(x[*p] / (x[*p] - v));
                }
            }
            for (p, v) in passive.iter().zip(&z) {
                x[*p] += alpha * (v - x[*p]);
            }
            passive.retain(|p| x[*p] > 1e-15 * scale.max(1.0));
            for i in 0..m {
                if !passive.contains(&i) {
                    x[i] = 0.0;
                }
            }
            if passive.is_empty() {
                break;
            }
        }
    }
    x
}

fn passive_lstsq(cols: &[[f64; 4]], passive: &[usize], f: &[f64; 4]) -> Vec<f64> {
    let a = nalgebra::DMatrix::from_fn(4, passive.len(), |r, c| cols[passive[c]][r]);
    let b = nalgebra::DVector::from_column_slice(f);
    let svd = a.svd(true, true);
    match svd.solve(&b, 1e-12) {
        Ok(z) => z.iter().copied().collect(),
        Err(_) => vec![0.0; passive.len()],
    }
}

/// Wrench at the TCP (TCP frame) from vertical contact forces on the
/// object, plus zero-mean Gaussian noise with per-axis std `noise`.
pub fn synth_wrench<R: Rng>(tcp: &Pose6, contacts: &[ContactForce], noise: &[f64; 6], rng: &mut R) -> Wrench6 {
    let clean = contact_wrench(tcp, contacts);
    let mut a = clean.to_array();
    for (v, s) in a.iter_mut().zip(noise) {
        if *s > 0.0 {
            *v += Normal::new(0.0, *s).expect("finite std").sample(rng);
        }
    }
    Wrench6::from_array(a)
}

/// Noise-free part of [`synth_wrench`].
pub fn contact_wrench(tcp: &Pose6, contacts: &[ContactForce]) -> Wrench6 {
    let rt = tcp.rotation().transpose();
    let mut f = Vector3::zeros();
    let mut tau = Vector3::zeros();
    for c in contacts {
        let force = Vector3::new(0.0, 0.0, c.normal_force);
        f += force;
        tau += (c.point - tcp.translation()).cross(&force);
    }
    let (f, tau) = (rt * f, rt * tau);
    Wrench6::from_array([f.x, f.y, f.z, tau.x, tau.y, tau.z])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SystemConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Geometry, ComplianceConfig) {
        let c = SystemConfig::rect_default();
        (c.geometry().unwrap(), c.simulator.compliance)
    }

    fn tcp_for(geom: &Geometry, x: f64, z: f64, yaw: f64) -> Pose6 {
        Pose6::new(x, 0.0, z, 0.0, 0.0, yaw).compose(&geom.object.tcp_to_object().inverse())
    }

    #[test]
    fn free_air_has_no_deflection() {
        let (g, k) = setup();
        let d = solve_deflection(&tcp_for(&g, 0.014, 0.01, 0.0), &g, &k).unwrap();
        assert_eq!((d.dz, d.roll, d.pitch), (0.0, 0.0, 0.0));
        assert!(d.contacts.is_empty());
    }

    #[test]
    fn pressed_onto_right_wall_stays_on_top() {
        let (g, k) = setup();
        for yaw in [0.0, 0.1, -0.2] {
            let tcp = tcp_for(&g, 0.014, -0.002, yaw);
            let d = solve_deflection(&tcp, &g, &k).unwrap();
            for (_, c) in g.object.corners() {
                let w = d.object_pose.transform_point(&c);
                if w.x >= 0.042 {
                    assert!(w.z > -1e-6, "corner below wall top: {w:?}");
                }
            }
            assert!(!d.contacts.is_empty());
            // contact forces balance the cup springs
            let total: f64 = d.contacts.iter().map(|c| c.normal_force).sum();
            assert!(total > 0.0);
            let w = contact_wrench(&tcp, &d.contacts);
            assert!((w.fz - total).abs() < 1e-9);
        }
    }

    #[test]
    fn wrench_torque_is_lever_cross_force() {
        let tcp = Pose6::new(0.01, 0.02, 0.1, 0.0, 0.0, 0.0);
        let c = ContactForce { point: Point3::new(0.05, -0.01, 0.0), normal_force: 1.5 };
        let w = contact_wrench(&tcp, &[c]);
        let r = c.point - tcp.translation();
        let f = Vector3::new(0.0, 0.0, 1.5);
        let expect = Vector3::new(r.y * f.z - r.z * f.y, r.z * f.x - r.x * f.z, r.x * f.y - r.y * f.x);
        assert!((w.tx - expect.x).abs() < 1e-12 && (w.ty - expect.y).abs() < 1e-12 && (w.tz - expect.z).abs() < 1e-12);
        let twice = ContactForce::from_penetration(c.point, 2e-4, 1e4);
        let once = ContactForce::from_penetration(c.point, 1e-4, 1e4);
        assert!((contact_wrench(&tcp, &[twice]).fz - 2.0 * contact_wrench(&tcp, &[once]).fz).abs() < 1e-12);
    }

    #[test]
    fn noise_only_without_contact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise = [0.05, 0.05, 0.05, 0.002, 0.002, 0.002];
        let n = 20_000;
        let mut mean = [0.0; 6];
        for _ in 0..n {
            let w = synth_wrench(&Pose6::identity(), &[], &noise, &mut rng).to_array();
            for k in 0..6 {
                mean[k] += w[k] / n as f64;
            }
        }
        for k in 0..6 {
            assert!(mean[k].abs() < 4.0 * noise[k] / (n as f64).sqrt());
        }
    }
}
