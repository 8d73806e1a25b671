//! Cost terms of the smoother and their linearizations.
//!
//! | kind | residual | dim |
//! |------|----------|-----|
//! | V | `p_t ⊖ w_t` | 6 |
//! | M | `(p_t ⊖ p_{t-1}) − (r_t ⊖ r_{t-1})` | 6 |
//! | C | `T(p_t)·q_o − q_w` for each pairing | 3k |
//! | L | `q − closest(q, feature)` | 3 |
//! | Q | `q − q̂` | 3 |
//!
//! `⊖` is componentwise subtraction with wrapped angles.

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};

use super::state::{PointRef, StateLayout, TimestepState};
use crate::error::{Error, Result};
use crate::geometry::pose::{rotation_derivatives, wrap_angle};
use crate::geometry::{pose_difference, Feature, Point3, Pose6};

/// Step for central differences of the L residual.
pub const FD_STEP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FactorKindTag {
    V,
    M,
    C,
    L,
    Q,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum FactorKind {
    /// Visual pose measurement (also used as a weak hold prior).
    V { node: usize, measured: Pose6 },
    /// Object displacement must follow robot TCP displacement.
    M { from: usize, to: usize, robot_from: Pose6, robot_to: Pose6 },
    /// Contact: paired object points (object frame) coincide with wall points.
    C { node: usize, pairs: Vec<(usize, usize)> },
    /// Contact point lies on a geometric feature (wall edge in world frame,
    /// object feature in object frame).
    L { node: usize, point: PointRef, feature: Feature },
    /// Weak prior of a contact point at its nominal position.
    Q { node: usize, point: PointRef, nominal: Point3 },
}

impl FactorKind {
    pub fn tag(&self) -> FactorKindTag {
        match self {
            FactorKind::V { .. } => FactorKindTag::V,
            FactorKind::M { .. } => FactorKindTag::M,
            FactorKind::C { .. } => FactorKindTag::C,
            FactorKind::L { .. } => FactorKindTag::L,
            FactorKind::Q { .. } => FactorKindTag::Q,
        }
    }

    pub fn nodes(&self) -> Vec<usize> {
        match self {
            FactorKind::M { from, to, .. } => vec![*from, *to],
            FactorKind::V { node, .. }
            | FactorKind::C { node, .. }
            | FactorKind::L { node, .. }
            | FactorKind::Q { node, .. } => vec![*node],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FactorKind::V { .. } | FactorKind::M { .. } => 6,
            FactorKind::C { pairs, .. } => 3 * pairs.len(),
            FactorKind::L { .. } | FactorKind::Q { .. } => 3,
        }
    }
}

/// Gaussian noise model with covariance `Ω`; stores the whitening matrix
/// `W = L⁻¹` where `Ω = L·Lᵀ`, so `‖W·e‖² = eᵀ·Ω⁻¹·e`.
#[derive(Debug, Clone, PartialEq)]
pub struct Noise {
    covariance: DMatrix<f64>,
    whiten: DMatrix<f64>,
}

impl Noise {
    pub fn from_covariance(cov: DMatrix<f64>) -> Result<Self> {
        if !cov.is_square() || cov.nrows() == 0 {
            return Err(Error::NotSpd);
        }
        let scale = cov.amax().max(f64::MIN_POSITIVE);
        if (&cov - cov.transpose()).amax() > 1e-12 * scale || cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotSpd);
        }
        let chol = cov.clone().cholesky().ok_or(Error::NotSpd)?;
        let l = chol.l();
        let whiten = l.try_inverse().ok_or(Error::NotSpd)?;
        Ok(Self { covariance: cov, whiten })
    }

    pub fn from_sigmas(sigmas: &[f64]) -> Result<Self> {
        let d = DVector::from_iterator(sigmas.len(), sigmas.iter().map(|s| s * s));
        Self::from_covariance(DMatrix::from_diagonal(&d))
    }

    pub fn isotropic(dim: usize, sigma: f64) -> Result<Self> {
        Self::from_sigmas(&vec![sigma; dim])
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn whiten(&self) -> &DMatrix<f64> {
        &self.whiten
    }

    pub fn mahalanobis_sq(&self, e: &DVector<f64>) -> f64 {
        (&self.whiten * e).norm_squared()
    }
}

impl Serialize for Noise {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = self.covariance.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Noise {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(serde::de::Error::custom("covariance must be square"));
        }
        let cov = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Noise::from_covariance(cov).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    #[serde(flatten)]
    pub kind: FactorKind,
    pub noise: Noise,
}

/// A Jacobian block: rows of the residual against `cols` variables of `node`
/// starting at local column `offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacBlock {
    pub node: usize,
    pub offset: usize,
    pub mat: DMatrix<f64>,
}

impl FactorSpec {
    pub fn new(kind: FactorKind, noise: Noise) -> Result<Self> {
        let f = Self { kind, noise };
        f.check_shape()?;
        Ok(f)
    }

    fn check_shape(&self) -> Result<()> {
        if let FactorKind::C { pairs, .. } = &self.kind {
            if pairs.is_empty() {
                return Err(Error::InvalidFactor("contact factor without pairings".into()));
            }
        }
        if let FactorKind::M { from, to, .. } = &self.kind {
            if *to != from + 1 {
                return Err(Error::InvalidFactor("motion factor must join consecutive nodes".into()));
            }
        }
        if self.noise.dim() != self.kind.dim() {
            return Err(Error::InvalidFactor(format!(
                "noise dimension {} does not match residual dimension {}",
                self.noise.dim(),
                self.kind.dim()
            )));
        }
        Ok(())
    }

    pub fn check_layout(&self, layout: &StateLayout) -> Result<()> {
        let ok = |p: &PointRef| match p {
            PointRef::Wall(i) => *i < layout.wall_points.len(),
            PointRef::Object(i) => *i < layout.object_points.len(),
        };
        let valid = match &self.kind {
            FactorKind::C { pairs, .. } => pairs
                .iter()
                .all(|(o, w)| *o < layout.object_points.len() && *w < layout.wall_points.len()),
            FactorKind::L { point, .. } | FactorKind::Q { point, .. } => ok(point),
            _ => true,
        };
        if valid {
            Ok(())
        } else {
            Err(Error::InvalidFactor("point index outside the state layout".into()))
        }
    }

    /// Whitened cost contribution `eᵀ·Ω⁻¹·e`.
    pub fn cost(&self, states: &[TimestepState]) -> f64 {
        self.noise.mahalanobis_sq(&residual(&self.kind, states))
    }
}

fn node_state(states: &[TimestepState], i: usize) -> &TimestepState {
    &states[i]
}

/// Kind-specific residual evaluated on the full list of node states.
pub fn residual(kind: &FactorKind, states: &[TimestepState]) -> DVector<f64> {
    match kind {
        FactorKind::V { node, measured } => {
            DVector::from_column_slice(pose_difference(&node_state(states, *node).pose, measured).as_slice())
        }
        FactorKind::M { from, to, robot_from, robot_to } => {
            let dp = pose_difference(&node_state(states, *to).pose, &node_state(states, *from).pose);
            let dr = pose_difference(robot_to, robot_from);
            let mut e = dp - dr;
            for k in 3..6 {
                e[k] = wrap_angle(e[k]);
            }
            DVector::from_column_slice(e.as_slice())
        }
        FactorKind::C { node, pairs } => {
            let s = node_state(states, *node);
            let mut e = DVector::zeros(3 * pairs.len());
            for (k, (o, w)) in pairs.iter().enumerate() {
                let d = s.pose.transform_point(&s.object_points[*o]) - s.wall_points[*w];
                e.fixed_rows_mut::<3>(3 * k).copy_from(&d);
            }
            e
        }
        FactorKind::L { node, point, feature } => {
            let q = node_state(states, *node).point(*point);
            let d = q - feature.closest_point(q);
            DVector::from_column_slice(d.as_slice())
        }
        FactorKind::Q { node, point, nominal } => {
            let d = node_state(states, *node).point(*point) - nominal;
            DVector::from_column_slice(d.as_slice())
        }
    }
}

/// Jacobian of [`residual`] as blocks over node variables. Analytic for V,
/// M, C and Q; central differences (step [`FD_STEP`]) for L, where the
/// closest feature point moves with the query.
pub fn jacobian(kind: &FactorKind, states: &[TimestepState], layout: &StateLayout) -> Vec<JacBlock> {
    let eye = |n: usize| DMatrix::<f64>::identity(n, n);
    match kind {
        FactorKind::V { node, .. } => vec![JacBlock { node: *node, offset: 0, mat: eye(6) }],
        FactorKind::M { from, to, .. } => vec![
            JacBlock { node: *from, offset: 0, mat: -eye(6) },
            JacBlock { node: *to, offset: 0, mat: eye(6) },
        ],
        FactorKind::C { node, pairs } => {
            let s = node_state(states, *node);
            let rot = s.pose.rotation();
            let drot = rotation_derivatives(s.pose.roll, s.pose.pitch, s.pose.yaw);
            let n = pairs.len();
            let mut pose_block = DMatrix::zeros(3 * n, 6);
            let mut blocks = Vec::new();
            for (k, (o, w)) in pairs.iter().enumerate() {
                let q = s.object_points[*o];
                pose_block.view_mut((3 * k, 0), (3, 3)).copy_from(&Matrix3::identity());
                for a in 0..3 {
                    pose_block.view_mut((3 * k, 3 + a), (3, 1)).copy_from(&(drot[a] * q));
                }
                let mut ob = DMatrix::zeros(3 * n, 3);
                ob.view_mut((3 * k, 0), (3, 3)).copy_from(&rot);
                blocks.push(JacBlock { node: *node, offset: layout.offset(PointRef::Object(*o)), mat: ob });
                let mut wb = DMatrix::zeros(3 * n, 3);
                wb.view_mut((3 * k, 0), (3, 3)).copy_from(&(-Matrix3::identity()));
                blocks.push(JacBlock { node: *node, offset: layout.offset(PointRef::Wall(*w)), mat: wb });
            }
            blocks.insert(0, JacBlock { node: *node, offset: 0, mat: pose_block });
            blocks
        }
        FactorKind::L { node, point, feature } => {
            let q = *node_state(states, *node).point(*point);
            let f = |p: Point3| p - feature.closest_point(&p);
            let mut m = DMatrix::zeros(3, 3);
            for a in 0..3 {
                let mut h = Point3::zeros();
                h[a] = FD_STEP;
                let col = (f(q + h) - f(q - h)) / (2.0 * FD_STEP);
                m.view_mut((0, a), (3, 1)).copy_from(&col);
            }
            vec![JacBlock { node: *node, offset: layout.offset(*point), mat: m }]
        }
        FactorKind::Q { node, point, .. } => {
            vec![JacBlock { node: *node, offset: layout.offset(*point), mat: eye(3) }]
        }
    }
}

/// Dense Jacobian against the stacked variables of the factor's nodes (in
/// the order returned by [`FactorKind::nodes`]).
pub fn dense_jacobian(kind: &FactorKind, states: &[TimestepState], layout: &StateLayout) -> DMatrix<f64> {
    let nodes = kind.nodes();
    let dim = layout.dim();
    let mut out = DMatrix::zeros(kind.dim(), dim * nodes.len());
    for b in jacobian(kind, states, layout) {
        let slot = nodes.iter().position(|n| *n == b.node).expect("block node belongs to factor");
        let mut view = out.view_mut((0, slot * dim + b.offset), (b.mat.nrows(), b.mat.ncols()));
        view += &b.mat;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> StateLayout {
        StateLayout::new(vec!["wl1".into()], vec!["o1".into()])
    }

    fn state(t: f64, pose: Pose6) -> TimestepState {
        TimestepState::new(t, pose, vec![Point3::zeros()], vec![Point3::zeros()])
    }

    #[test]
    fn vision_residual_zero_at_measurement() {
        let p = Pose6::new(0.01, 0.02, 0.03, 0.1, 0.2, 0.3);
        let e = residual(&FactorKind::V { node: 0, measured: p }, &[state(0.0, p)]);
        assert_eq!(e, DVector::zeros(6));
        let j = dense_jacobian(&FactorKind::V { node: 0, measured: p }, &[state(0.0, p)], &layout());
        assert_eq!(j.view((0, 0), (6, 6)).clone_owned(), DMatrix::identity(6, 6));
    }

    #[test]
    fn motion_residual_zero_for_equal_displacements() {
        let a = Pose6::new(0.0, 0.0, 0.1, 0.0, 0.0, 3.1);
        let b = Pose6::new(0.0, 0.0, 0.095, 0.0, 0.0, -3.13);
        let ra = Pose6::new(1.0, 0.0, 0.2, 0.0, 0.0, 0.5);
        let rb = Pose6::new(1.0, 0.0, 0.195, 0.0, 0.0, 0.5 + (std::f64::consts::TAU - 6.23));
        let k = FactorKind::M { from: 0, to: 1, robot_from: ra, robot_to: rb };
        let e = residual(&k, &[state(0.0, a), state(0.1, b)]);
        assert!(e.amax() < 1e-12, "{e}");
        let j = dense_jacobian(&k, &[state(0.0, a), state(0.1, b)], &layout());
        assert_eq!(j.view((0, 0), (6, 6)).clone_owned(), -DMatrix::identity(6, 6));
        assert_eq!(j.view((0, 12), (6, 6)).clone_owned(), DMatrix::identity(6, 6));
    }

    #[test]
    fn contact_residual_is_point_subtraction() {
        let mut s = state(0.0, Pose6::identity());
        s.object_points[0] = Point3::new(0.04, 0.025, 0.0);
        s.wall_points[0] = Point3::new(0.04, 0.025, 0.0);
        let k = FactorKind::C { node: 0, pairs: vec![(0, 0)] };
        assert_eq!(residual(&k, &[s.clone()]), DVector::zeros(3));
        s.wall_points[0].z += 0.01;
        let e = residual(&k, &[s]);
        assert!((e - DVector::from_vec(vec![0.0, 0.0, -0.01])).amax() < 1e-15);
    }

    #[test]
    fn empty_contact_factor_rejected() {
        let k = FactorKind::C { node: 0, pairs: vec![] };
        let noise = Noise::isotropic(3, 0.001).unwrap();
        assert!(matches!(FactorSpec::new(k, noise), Err(Error::InvalidFactor(_))));
    }

    #[test]
    fn noise_validation() {
        assert!(Noise::from_sigmas(&[1.0, 2.0]).is_ok());
        let mut bad = DMatrix::identity(2, 2);
        bad[(0, 1)] = 2.0;
        bad[(1, 0)] = 2.0;
        assert!(matches!(Noise::from_covariance(bad), Err(Error::NotSpd)));
        let mut asym = DMatrix::identity(2, 2);
        asym[(0, 1)] = 0.5;
        assert!(matches!(Noise::from_covariance(asym), Err(Error::NotSpd)));
    }

    #[test]
    fn whitened_cost_definition() {
        let n = Noise::isotropic(6, 0.5).unwrap();
        let e = DVector::from_vec(vec![1.0, 0.0, 2.0, 0.0, 0.0, 0.0]);
        assert!((n.mahalanobis_sq(&e) - 5.0 / 0.25).abs() < 1e-12);
    }

    #[test]
    fn noise_json_roundtrip() {
        let n = Noise::from_sigmas(&[0.1, 0.2, 0.3]).unwrap();
        let s = serde_json::to_string(&n).unwrap();
        let back: Noise = serde_json::from_str(&s).unwrap();
        assert_eq!(n, back);
    }
}
