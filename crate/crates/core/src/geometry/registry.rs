//! Contact-formation registry and the geometry section of the config file.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::closest::LineSegment3;
use super::pose::Point3;
use super::shapes::{Feature, ObjectPoint, ObjectShape, ShapeKind, Side, WallModel};
use crate::error::{Error, Result};

/// One contact formation: which walls are touched and which bottom corners
/// overhang them (the signature), plus the point pairings joined by contact
/// constraints while the formation is active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactFormationSpec {
    pub cf_id: u32,
    pub name: String,
    pub walls: Vec<Side>,
    #[serde(default)]
    pub corners: Vec<String>,
    /// `(object_point_id, wall_point_id)`
    pub pairings: Vec<(String, String)>,
}

impl ContactFormationSpec {
    fn signature(&self) -> (BTreeSet<Side>, BTreeSet<String>) {
        (
            self.walls.iter().copied().collect(),
            self.corners.iter().cloned().collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfRegistry {
    pub formations: Vec<ContactFormationSpec>,
}

impl CfRegistry {
    pub fn new(mut formations: Vec<ContactFormationSpec>) -> Self {
        formations.sort_by_key(|f| f.cf_id);
        Self { formations }
    }

    pub fn ids(&self) -> Vec<u32> {
        self.formations.iter().map(|f| f.cf_id).collect()
    }

    pub fn len(&self) -> usize {
        self.formations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.formations.is_empty()
    }

    pub fn get(&self, cf_id: u32) -> Result<&ContactFormationSpec> {
        self.formations
            .iter()
            .find(|f| f.cf_id == cf_id)
            .ok_or(Error::UnknownCf(cf_id))
    }

    pub fn contains(&self, cf_id: u32) -> bool {
        self.get(cf_id).is_ok()
    }

    /// Exact signature lookup.
    pub fn find(&self, walls: &BTreeSet<Side>, corners: &BTreeSet<String>) -> Option<u32> {
        self.formations
            .iter()
            .find(|f| {
                let (w, c) = f.signature();
                &w == walls && &c == corners
            })
            .map(|f| f.cf_id)
    }

    /// Two formations are adjacent when both involve contact and their
    /// signatures differ by exactly one overhanging corner.
    pub fn adjacent(&self, a: u32, b: u32) -> bool {
        let (Ok(fa), Ok(fb)) = (self.get(a), self.get(b)) else {
            return false;
        };
        if a == b || fa.walls.is_empty() || fb.walls.is_empty() {
            return false;
        }
        let tag = |f: &ContactFormationSpec| -> BTreeSet<String> { f.corners.iter().cloned().collect() };
        let (ta, tb) = (tag(fa), tag(fb));
        ta.symmetric_difference(&tb).count() == 1
    }

    /// Stable content hash (hex SHA-256 of the canonical JSON encoding).
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("registry serializes");
        hex_digest(&json)
    }

    pub fn validate(&self, shape: &ObjectShape, walls: &WallModel) -> Result<()> {
        let mut seen = BTreeSet::new();
        for f in &self.formations {
            if !seen.insert(f.cf_id) {
                return Err(Error::Config(format!("duplicate CF id {}", f.cf_id)));
            }
            if f.cf_id == 0 && (!f.pairings.is_empty() || !f.walls.is_empty()) {
                return Err(Error::Config("CF 0 must have no pairings".into()));
            }
            if f.cf_id != 0 && f.pairings.is_empty() {
                return Err(Error::Config(format!("CF {} has no pairings", f.cf_id)));
            }
            for (o, w) in &f.pairings {
                if shape.point_index(o).is_none() {
                    return Err(Error::Config(format!("CF {}: unknown object point {o}", f.cf_id)));
                }
                if walls.point_index(w).is_none() {
                    return Err(Error::Config(format!("CF {}: unknown wall point {w}", f.cf_id)));
                }
            }
            for c in &f.corners {
                if shape.corner(c).is_none() {
                    return Err(Error::Config(format!("CF {}: unknown corner {c}", f.cf_id)));
                }
            }
        }
        if !seen.contains(&0) {
            return Err(Error::Config("registry must contain CF 0".into()));
        }
        Ok(())
    }
}

/// Returns the pairings of a formation verbatim (empty for CF 0).
pub fn cf_constraint_pairs(cf_id: u32, registry: &CfRegistry) -> Result<Vec<(String, String)>> {
    Ok(registry.get(cf_id)?.pairings.clone())
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

// ---- config file schema -------------------------------------------------

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectPointConfig {
    pub id: String,
    /// Rect: the two corners bounding the bottom edge the point slides on.
    #[serde(default)]
    pub edge: Option<[String; 2]>,
    /// Ellip: boundary parameter of the nominal position.
    #[serde(default)]
    pub ellipse_param: Option<f64>,
    #[serde(default)]
    pub nominal: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectConfig {
    pub kind: String,
    #[serde(default)]
    pub width_x: f64,
    #[serde(default)]
    pub depth_y: f64,
    #[serde(default)]
    pub semi_axis_x: f64,
    #[serde(default)]
    pub semi_axis_y: f64,
    pub height_z: f64,
    pub mass_kg: f64,
    #[serde(default)]
    pub grasp_offset: [f64; 3],
    pub points: Vec<ObjectPointConfig>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct WallConfig {
    pub slot_width_x: f64,
    pub top_width: f64,
    pub length_y: f64,
    pub floor_depth: f64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CfConfig {
    pub id: u32,
    pub name: String,
    #[serde(default)]
    pub walls: Vec<Side>,
    #[serde(default)]
    pub corners: Vec<String>,
    #[serde(default)]
    pub pairings: Vec<[String; 2]>,
}

/// Resolved geometry: object, walls and CF registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub name: String,
    pub object: ObjectShape,
    pub walls: WallModel,
    pub registry: CfRegistry,
}

impl Geometry {
    pub fn from_config(name: &str, object: &ObjectConfig, walls: &WallConfig, cfs: &[CfConfig]) -> Result<Self> {
        let shape = match object.kind.as_str() {
            "rect" => ShapeKind::Rect { width_x: object.width_x, depth_y: object.depth_y },
            "ellip" => ShapeKind::Ellip { semi_axis_x: object.semi_axis_x, semi_axis_y: object.semi_axis_y },
            other => return Err(Error::Config(format!("unknown object kind {other:?}"))),
        };
        let mut shape = ObjectShape {
            shape,
            height_z: object.height_z,
            mass_kg: object.mass_kg,
            grasp_offset: Point3::from(object.grasp_offset),
            points: Vec::new(),
        };
        for p in &object.points {
            let (feature, nominal) = match (shape.shape, &p.edge, p.ellipse_param) {
                (ShapeKind::Rect { .. }, Some([a, b]), None) => {
                    let ca = shape.corner(a).ok_or_else(|| Error::Config(format!("unknown corner {a}")))?;
                    let cb = shape.corner(b).ok_or_else(|| Error::Config(format!("unknown corner {b}")))?;
                    let seg = LineSegment3::new(ca, cb);
                    (Feature::Segment(seg), seg.midpoint())
                }
                (ShapeKind::Ellip { semi_axis_x, semi_axis_y }, None, Some(t)) => (
                    Feature::Ellipse { a: semi_axis_x, b: semi_axis_y },
                    Point3::new(semi_axis_x * t.cos(), semi_axis_y * t.sin(), 0.0),
                ),
                _ => {
                    return Err(Error::Config(format!(
                        "object point {}: rect points need `edge`, ellip points need `ellipse_param`",
                        p.id
                    )))
                }
            };
            shape.points.push(ObjectPoint {
                id: p.id.clone(),
                feature,
                nominal: p.nominal.map(Point3::from).unwrap_or(nominal),
            });
        }
        let walls = WallModel::new(walls.slot_width_x, walls.top_width, walls.length_y, walls.floor_depth);
        let registry = CfRegistry::new(
            cfs.iter()
                .map(|c| ContactFormationSpec {
                    cf_id: c.id,
                    name: c.name.clone(),
                    walls: c.walls.clone(),
                    corners: c.corners.clone(),
                    pairings: c.pairings.iter().map(|[o, w]| (o.clone(), w.clone())).collect(),
                })
                .collect(),
        );
        shape.validate()?;
        walls.validate()?;
        registry.validate(&shape, &walls)?;
        Ok(Self { name: name.to_string(), object: shape, walls, registry })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SystemConfig;

    #[test]
    fn rect_registry_shape() {
        let g = SystemConfig::rect_default().geometry().unwrap();
        assert_eq!(g.registry.ids(), (0..=8).collect::<Vec<_>>());
        assert!(cf_constraint_pairs(0, &g.registry).unwrap().is_empty());
        assert_eq!(cf_constraint_pairs(2, &g.registry).unwrap().len(), 2);
        assert!(matches!(cf_constraint_pairs(42, &g.registry), Err(Error::UnknownCf(42))));
    }

    #[test]
    fn ellip_registry_shape() {
        let g = SystemConfig::ellip_default().geometry().unwrap();
        assert_eq!(g.registry.ids(), vec![0, 1, 2]);
        let p = cf_constraint_pairs(1, &g.registry).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(g.walls.points[g.walls.point_index(&p[0].1).unwrap()].side, Side::Left);
    }

    #[test]
    fn rect_adjacency_matches_neighbour_list() {
        let g = SystemConfig::rect_default().geometry().unwrap();
        for (a, b) in [(1, 2), (2, 3), (4, 5), (5, 6), (3, 7), (4, 8)] {
            assert!(g.registry.adjacent(a, b), "{a}-{b}");
            assert!(g.registry.adjacent(b, a));
        }
        assert!(!g.registry.adjacent(1, 4));
        assert!(!g.registry.adjacent(0, 1));
        assert!(!g.registry.adjacent(2, 5));
    }

    #[test]
    fn registry_hash_is_stable() {
        let g = SystemConfig::rect_default().geometry().unwrap();
        assert_eq!(g.registry.hash(), g.registry.clone().hash());
        let e = SystemConfig::ellip_default().geometry().unwrap();
        assert_ne!(g.registry.hash(), e.registry.hash());
    }
}
