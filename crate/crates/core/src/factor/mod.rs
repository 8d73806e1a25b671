//! Factor graph over timestep states with an incrementally updated
//! square-root information matrix.

pub mod factors;
pub mod graph;
pub mod sparse;
pub mod state;

pub use factors::{dense_jacobian, jacobian, residual, FactorKind, FactorKindTag, FactorSpec, JacBlock, Noise};
pub use graph::{cost_of, FactorGraph, GraphSnapshot, RelinReport, SolverSettings};
pub use sparse::SqrtInfo;
pub use state::{PointRef, StateLayout, TimestepState};
