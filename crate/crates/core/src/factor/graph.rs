use serde::{Deserialize, Serialize};

use super::factors::{jacobian, residual, FactorSpec};
use super::sparse::SqrtInfo;
use super::state::{StateLayout, TimestepState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    /// Relinearize after this many nodes since the last relinearization.
    pub relin_every_nodes: usize,
    pub relin_translation: f64,
    pub relin_rotation: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Stop once the accepted cost decrease falls below this (relative to
    /// `max(1, cost)`).
    pub min_decrease: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            relin_every_nodes: 25,
            relin_translation: 0.01,
            relin_rotation: 0.05,
            max_iterations: 25,
            max_halvings: 10,
            min_decrease: 1e-12,
        }
    }
}

/// Outcome of a batch relinearization.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RelinReport {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub diverged: bool,
}

/// Smoothing graph over timestep states in temporal variable order.
#[derive(Debug, Clone)]
pub struct FactorGraph {
    layout: StateLayout,
    settings: SolverSettings,
    estimates: Vec<TimestepState>,
    lin_points: Vec<TimestepState>,
    factors: Vec<FactorSpec>,
    sqrt: SqrtInfo,
    nodes_since_relin: usize,
    relin_count: usize,
    diverged: bool,
}

impl FactorGraph {
    pub fn new(layout: StateLayout) -> Self {
        Self::with_settings(layout, SolverSettings::default())
    }

    pub fn with_settings(layout: StateLayout, settings: SolverSettings) -> Self {
        Self {
            layout,
            settings,
            estimates: Vec::new(),
            lin_points: Vec::new(),
            factors: Vec::new(),
            sqrt: SqrtInfo::new(0),
            nodes_since_relin: 0,
            relin_count: 0,
            diverged: false,
        }
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    pub fn estimates(&self) -> &[TimestepState] {
        &self.estimates
    }

    pub fn estimate(&self, node: usize) -> Option<&TimestepState> {
        self.estimates.get(node)
    }

    pub fn linearization_points(&self) -> &[TimestepState] {
        &self.lin_points
    }

    pub fn factors(&self) -> &[FactorSpec] {
        &self.factors
    }

    pub fn sqrt_info(&self) -> &SqrtInfo {
        &self.sqrt
    }

    pub fn relinearizations(&self) -> usize {
        self.relin_count
    }

    pub fn diverged(&self) -> bool {
        self.diverged
    }

    pub fn add_node(&mut self, init: TimestepState) -> Result<usize> {
        if !init.matches(&self.layout) {
            return Err(Error::InvalidFactor("node state does not match the graph layout".into()));
        }
        if let Some(last) = self.estimates.last() {
            if !(init.timestamp > last.timestamp) {
                return Err(Error::NonMonotonicTimestamp { prev: last.timestamp, got: init.timestamp });
            }
        }
        self.estimates.push(init.clone());
        self.lin_points.push(init);
        self.sqrt.resize(self.estimates.len() * self.layout.dim());
        self.nodes_since_relin += 1;
        Ok(self.estimates.len() - 1)
    }

    pub fn add_factor(&mut self, f: FactorSpec) -> Result<usize> {
        if let Some(bad) = f.kind.nodes().into_iter().find(|n| *n >= self.estimates.len()) {
            return Err(Error::BadNode(bad));
        }
        f.check_layout(&self.layout)?;
        fold_factor(&mut self.sqrt, &f, &self.lin_points, &self.layout);
        self.factors.push(f);
        Ok(self.factors.len() - 1)
    }

    /// Back-substitutes the current `R` and moves every estimate to
    /// `linearization point ⊕ Δ`. Returns the largest change per node as
    /// `(translation, rotation)`.
    pub fn solve_incremental(&mut self) -> Result<(f64, f64)> {
        let delta = self.solve_delta()?;
        let dim = self.layout.dim();
        let mut moved = (0.0f64, 0.0f64);
        for (i, lin) in self.lin_points.iter().enumerate() {
            let d = &delta[i * dim..(i + 1) * dim];
            let next = lin.retract(d);
            let step = next.local(&self.estimates[i]);
            moved.0 = moved.0.max(step[..3].iter().chain(&step[6..]).fold(0.0f64, |m, v| m.max(v.abs())));
            moved.1 = moved.1.max(step[3..6].iter().fold(0.0f64, |m, v| m.max(v.abs())));
            self.estimates[i] = next;
        }
        Ok(moved)
    }

    fn solve_delta(&self) -> Result<Vec<f64>> {
        self.sqrt.back_substitute().map_err(|col| {
            let dim = self.layout.dim();
            Error::Singular { block: format!("node {} {}", col / dim, self.layout.block_name(col % dim)) }
        })
    }

    /// Largest drift of any estimate from its linearization point, as
    /// `(translation, rotation)`.
    pub fn linearization_drift(&self) -> (f64, f64) {
        let mut out = (0.0f64, 0.0f64);
        for (e, l) in self.estimates.iter().zip(&self.lin_points) {
            let d = e.local(l);
            out.0 = out.0.max(d[..3].iter().chain(&d[6..]).fold(0.0f64, |m, v| m.max(v.abs())));
            out.1 = out.1.max(d[3..6].iter().fold(0.0f64, |m, v| m.max(v.abs())));
        }
        out
    }

    /// Incremental solve followed by the relinearization schedule. Returns the
    /// relinearization report when one ran.
    pub fn update(&mut self) -> Result<Option<RelinReport>> {
        self.solve_incremental()?;
        let (dt, dr) = self.linearization_drift();
        let s = self.settings;
        if self.nodes_since_relin >= s.relin_every_nodes || dt > s.relin_translation || dr > s.relin_rotation {
            return self.batch_relinearize().map(Some);
        }
        Ok(None)
    }

    pub fn total_cost(&self) -> f64 {
        cost_of(&self.factors, &self.estimates)
    }

    /// Gauss-Newton from the current estimates with step halving, then
    /// refactors `R` at the result.
    pub fn batch_relinearize(&mut self) -> Result<RelinReport> {
        let s = self.settings;
        let mut cost = self.total_cost();
        let mut report = RelinReport { initial_cost: cost, final_cost: cost, ..Default::default() };
        let dim = self.layout.dim();
        for _ in 0..s.max_iterations {
            self.lin_points = self.estimates.clone();
            self.rebuild();
            let delta = self.solve_delta()?;
            report.iterations += 1;
            if delta.iter().all(|d| d.abs() < 1e-14) {
                break;
            }
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..=s.max_halvings {
                let cand: Vec<TimestepState> = self
                    .lin_points
                    .iter()
                    .enumerate()
                    .map(|(i, l)| {
                        let d: Vec<f64> = delta[i * dim..(i + 1) * dim].iter().map(|v| alpha * v).collect();
                        l.retract(&d)
                    })
                    .collect();
                let c = cost_of(&self.factors, &cand);
                // rounding noise at the optimum must not count as an increase
                if c <= cost + 1e-12 * cost.max(1.0) {
                    accepted = Some((cand, c));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((cand, c)) = accepted else {
                report.diverged = true;
                self.diverged = true;
                break;
            };
            let decrease = cost - c;
            self.estimates = cand;
            cost = c;
            if decrease < s.min_decrease * cost.max(1.0) {
                break;
            }
        }
        self.lin_points = self.estimates.clone();
        self.rebuild();
        self.nodes_since_relin = 0;
        self.relin_count += 1;
        report.final_cost = cost;
        Ok(report)
    }

    fn rebuild(&mut self) {
        let mut sqrt = SqrtInfo::new(self.estimates.len() * self.layout.dim());
        for f in &self.factors {
            fold_factor(&mut sqrt, f, &self.lin_points, &self.layout);
        }
        self.sqrt = sqrt;
    }

    pub fn snapshot(&self) -> GraphSnapshot {
        GraphSnapshot {
            layout: self.layout.clone(),
            estimates: self.estimates.clone(),
            factors: self.factors.clone(),
            cost: self.total_cost(),
        }
    }
}

/// Debug export of a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub layout: StateLayout,
    pub estimates: Vec<TimestepState>,
    pub factors: Vec<FactorSpec>,
    pub cost: f64,
}

pub fn cost_of(factors: &[FactorSpec], states: &[TimestepState]) -> f64 {
    factors.iter().map(|f| f.cost(states)).sum()
}

/// Whitens the factor at the linearization points and folds its rows in:
/// `A = W·J`, `b = −W·e`.
fn fold_factor(sqrt: &mut SqrtInfo, f: &FactorSpec, lin: &[TimestepState], layout: &StateLayout) {
    let dim = layout.dim();
    let e = residual(&f.kind, lin);
    let blocks = jacobian(&f.kind, lin, layout);
    let lo = blocks.iter().map(|b| b.node * dim + b.offset).min().expect("factor has blocks");
    let hi = blocks
        .iter()
        .map(|b| b.node * dim + b.offset + b.mat.ncols())
        .max()
        .expect("factor has blocks");
    let mut j = nalgebra::DMatrix::zeros(f.kind.dim(), hi - lo);
    for b in &blocks {
        let mut v = j.view_mut((0, b.node * dim + b.offset - lo), (b.mat.nrows(), b.mat.ncols()));
        v += &b.mat;
    }
    let w = f.noise.whiten();
    let a = w * j;
    let rhs = -(w * e);
    for r in 0..a.nrows() {
        sqrt.add_row(lo, a.row(r).iter().copied().collect(), rhs[r]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::factors::{FactorKind, Noise};
    use crate::factor::state::PointRef;
    use crate::geometry::{Point3, Pose6};

    fn layout() -> StateLayout {
        StateLayout::new(vec!["w".into()], vec![])
    }

    fn node(t: f64) -> TimestepState {
        TimestepState::new(t, Pose6::identity(), vec![Point3::zeros()], vec![])
    }

    fn prior_all(g: &mut FactorGraph, n: usize) {
        let f = FactorSpec::new(
            FactorKind::Q { node: n, point: PointRef::Wall(0), nominal: Point3::new(0.1, 0.2, 0.3) },
            Noise::isotropic(3, 1.0).unwrap(),
        )
        .unwrap();
        g.add_factor(f).unwrap();
    }

    #[test]
    fn node_ids_and_monotonic_time() {
        let mut g = FactorGraph::new(layout());
        assert_eq!(g.add_node(node(0.0)).unwrap(), 0);
        assert_eq!(g.add_node(node(0.1)).unwrap(), 1);
        assert!(matches!(g.add_node(node(0.1)), Err(Error::NonMonotonicTimestamp { .. })));
        assert_eq!(g.total_cost(), 0.0);
    }

    #[test]
    fn single_vision_factor_solves_exactly() {
        let mut g = FactorGraph::new(layout());
        g.add_node(node(0.0)).unwrap();
        let w = Pose6::new(0.01, -0.02, 0.03, 0.1, -0.05, 0.2);
        g.add_factor(FactorSpec::new(FactorKind::V { node: 0, measured: w }, Noise::isotropic(6, 1.0).unwrap()).unwrap())
            .unwrap();
        prior_all(&mut g, 0);
        g.solve_incremental().unwrap();
        let e = g.estimate(0).unwrap();
        assert!((e.pose.to_vector() - w.to_vector()).amax() < 1e-15);
        assert!((e.wall_points[0] - Point3::new(0.1, 0.2, 0.3)).amax() < 1e-15);
        assert!(g.total_cost() < 1e-28);
    }

    #[test]
    fn contact_only_graph_is_singular() {
        let l = StateLayout::new(vec!["w".into()], vec!["o".into()]);
        let mut g = FactorGraph::new(l);
        g.add_node(TimestepState::new(0.0, Pose6::identity(), vec![Point3::zeros()], vec![Point3::zeros()]))
            .unwrap();
        g.add_factor(
            FactorSpec::new(FactorKind::C { node: 0, pairs: vec![(0, 0)] }, Noise::isotropic(3, 1e-3).unwrap()).unwrap(),
        )
        .unwrap();
        assert!(matches!(g.solve_incremental(), Err(Error::Singular { .. })));
    }

    #[test]
    fn bad_node_rejected() {
        let mut g = FactorGraph::new(layout());
        g.add_node(node(0.0)).unwrap();
        let f = FactorSpec::new(
            FactorKind::V { node: 3, measured: Pose6::identity() },
            Noise::isotropic(6, 1.0).unwrap(),
        )
        .unwrap();
        assert!(matches!(g.add_factor(f), Err(Error::BadNode(3))));
    }

    #[test]
    fn motion_factor_couples_nodes() {
        let mut g = FactorGraph::new(layout());
        g.add_node(node(0.0)).unwrap();
        g.add_node(node(0.1)).unwrap();
        let r0 = Pose6::identity();
        let r1 = Pose6::new(0.0, 0.0, -0.001, 0.0, 0.0, 0.0);
        g.add_factor(
            FactorSpec::new(FactorKind::M { from: 0, to: 1, robot_from: r0, robot_to: r1 }, Noise::isotropic(6, 1.0).unwrap())
                .unwrap(),
        )
        .unwrap();
        let dim = g.layout().dim();
        assert!(g.sqrt_info().get(2, dim + 2).abs() > 0.1);
    }
}
