//! Pose algebra, object/wall models, the contact-formation registry and
//! ground-truth labeling.

pub mod closest;
pub mod labeling;
pub mod pose;
pub mod registry;
pub mod shapes;

pub use closest::{
    closest_point_on_ellipse, closest_point_on_segment, closest_points_between_segments, LineSegment3,
};
pub use labeling::{groundtruth_contact_points, label_cf_groundtruth, DEFAULT_LABEL_TOL};
pub use pose::{
    compose, pose_difference, rotation_angle_between, transform_point, wrap_angle, Point3, Pose6,
};
pub use registry::{cf_constraint_pairs, CfRegistry, ContactFormationSpec, Geometry};
pub use shapes::{Feature, ObjectPoint, ObjectShape, ShapeKind, Side, WallModel, WallPoint};
