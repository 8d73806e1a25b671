//! Online estimation loop: multi-rate aggregation into estimator ticks,
//! contact-formation prediction, per-tick factor assembly and smoothing.

pub mod io;

use std::collections::{BTreeMap, VecDeque};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classifier::{SvmModel, Wrench6};
use crate::config::EstimatorConfig;
use crate::error::{Error, Result};
use crate::factor::{FactorGraph, FactorKind, FactorSpec, Noise, PointRef, StateLayout, TimestepState};
use crate::geometry::{cf_constraint_pairs, Feature, Geometry, Point3, Pose6};
use crate::simulator::TrialStream;

/// Which cost families attach to each node. V and Q are always on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "vision")]
    Vision,
    #[serde(rename = "vision+robot")]
    VisionRobot,
    #[serde(rename = "vision+contact")]
    VisionContact,
    #[serde(rename = "full")]
    Full,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Vision, Mode::VisionRobot, Mode::VisionContact, Mode::Full];

    pub fn motion(self) -> bool {
        matches!(self, Mode::VisionRobot | Mode::Full)
    }

    pub fn contact(self) -> bool {
        matches!(self, Mode::VisionContact | Mode::Full)
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Vision => "vision",
            Mode::VisionRobot => "vision+robot",
            Mode::VisionContact => "vision+contact",
            Mode::Full => "full",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode {s:?}, expected vision, vision+robot, vision+contact or full"))
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Where the per-tick contact formation comes from.
#[derive(Debug, Clone, Copy)]
pub enum CfSource<'a> {
    Classifier(&'a SvmModel),
    /// Ground-truth label of the tick (bypasses the classifier).
    Truth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementBundle {
    pub t: f64,
    pub vision: Option<Pose6>,
    pub robot_pose: Pose6,
    pub wrench: Wrench6,
    pub predicted_cf: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub t: f64,
    pub pose: Pose6,
    /// Wall points in the world frame.
    pub wall_points: BTreeMap<String, Point3>,
    /// Object points in the object frame.
    pub object_points: BTreeMap<String, Point3>,
    pub cf: u32,
    #[serde(skip)]
    pub latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
    pub steps: usize,
    pub dropped_c_factor_ticks: usize,
}

impl TimingStats {
    pub fn from_latencies(lat: &[f64], dropped: usize) -> Self {
        if lat.is_empty() {
            return Self { dropped_c_factor_ticks: dropped, ..Default::default() };
        }
        let mut s = lat.to_vec();
        s.sort_by(f64::total_cmp);
        let idx = ((0.99 * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1;
        Self {
            mean_ms: s.iter().sum::<f64>() / s.len() as f64,
            p99_ms: s[idx],
            max_ms: s[s.len() - 1],
            steps: s.len(),
            dropped_c_factor_ticks: dropped,
        }
    }
}

/// Times of the estimator ticks: for each multiple of the tick period, the
/// first robot record at or after it.
pub fn tick_times(stream: &TrialStream, rate_hz: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut next = 0usize;
    for r in &stream.robot {
        if r.t >= next as f64 / rate_hz - 1e-9 {
            out.push(r.t);
            next = (r.t * rate_hz + 1e-9).floor() as usize + 1;
        }
    }
    out
}

/// Measurements of the window `(prev, t]` (just `t` for the first tick).
/// The CF is left at 0 for the caller to fill in.
pub fn aggregate_window(stream: &TrialStream, prev: Option<f64>, t: f64) -> Result<MeasurementBundle> {
    let in_window = |x: f64| x <= t && prev.map_or(x >= t, |p| x > p);
    let robot = stream
        .robot
        .iter()
        .rev()
        .find(|r| r.t <= t && prev.is_none_or(|p| r.t > p))
        .ok_or(Error::StreamGap(t))?;
    let ws: Vec<&Wrench6> = stream.wrench.iter().filter(|w| in_window(w.t)).map(|w| &w.wrench).collect();
    let wrench = if ws.is_empty() {
        Wrench6::default()
    } else {
        ws.iter().fold(Wrench6::default(), |acc, w| acc + **w) * (1.0 / ws.len() as f64)
    };
    let vision = stream
        .vision
        .iter()
        .rev()
        .filter(|v| in_window(v.t) || (prev.is_none() && v.t <= t))
        .find_map(|v| v.pose);
    Ok(MeasurementBundle { t, vision, robot_pose: robot.pose, wrench, predicted_cf: 0 })
}

struct NoiseSet {
    vision: Noise,
    motion: Noise,
    hold: Noise,
    contact_one: Noise,
    feature: Noise,
    prior: Noise,
}

impl NoiseSet {
    fn new(cfg: &EstimatorConfig) -> Result<Self> {
        let n = &cfg.noise;
        let (vt, vr) = (n.vision_translation, n.vision_rotation);
        let (mt, mr) = (n.motion_translation, n.motion_rotation);
        Ok(Self {
            vision: Noise::from_sigmas(&[vt, vt, vt, vr, vr, vr])?,
            motion: Noise::from_sigmas(&[mt, mt, mt, mr, mr, mr])?,
            hold: Noise::isotropic(6, n.hold_prior)?,
            contact_one: Noise::isotropic(3, n.contact)?,
            feature: Noise::isotropic(3, n.feature)?,
            prior: Noise::isotropic(3, n.point_prior)?,
        })
    }

    fn contact(&self, pairs: usize) -> Result<Noise> {
        let s = self.contact_one.covariance()[(0, 0)].sqrt();
        Noise::isotropic(3 * pairs, s)
    }
}

/// Single-trial online estimator.
pub struct Estimator<'g> {
    geom: &'g Geometry,
    cfg: EstimatorConfig,
    mode: Mode,
    noise: NoiseSet,
    graph: FactorGraph,
    last_robot: Option<Pose6>,
    last_t: Option<f64>,
    recent_cf: VecDeque<u32>,
    dropped_c: usize,
}

impl<'g> Estimator<'g> {
    pub fn new(geom: &'g Geometry, cfg: &EstimatorConfig, mode: Mode) -> Result<Self> {
        let layout = StateLayout::new(
            geom.walls.points.iter().map(|p| p.id.clone()).collect(),
            geom.object.points.iter().map(|p| p.id.clone()).collect(),
        );
        Ok(Self {
            geom,
            cfg: *cfg,
            mode,
            noise: NoiseSet::new(cfg)?,
            graph: FactorGraph::with_settings(layout, cfg.solver),
            last_robot: None,
            last_t: None,
            recent_cf: VecDeque::new(),
            dropped_c: 0,
        })
    }

    pub fn graph(&self) -> &FactorGraph {
        &self.graph
    }

    pub fn dropped_c_ticks(&self) -> usize {
        self.dropped_c
    }

    fn filtered_cf(&mut self, cf: u32) -> u32 {
        if !self.cfg.cf_debounce {
            return cf;
        }
        self.recent_cf.push_back(cf);
        while self.recent_cf.len() > 3 {
            self.recent_cf.pop_front();
        }
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for c in &self.recent_cf {
            *counts.entry(*c).or_default() += 1;
        }
        match counts.iter().find(|(_, n)| **n >= 2) {
            Some((c, _)) => *c,
            None => cf,
        }
    }

    fn initial_state(&self, b: &MeasurementBundle) -> TimestepState {
        let n = self.graph.len();
        if n == 0 {
            let pose = b.vision.unwrap_or_else(|| b.robot_pose.compose(&self.geom.object.tcp_to_object()));
            TimestepState::new(
                b.t,
                pose,
                self.geom.walls.points.iter().map(|p| p.nominal).collect(),
                self.geom.object.points.iter().map(|p| p.nominal).collect(),
            )
        } else {
            let prev = self.graph.estimate(n - 1).expect("previous node").clone();
            let r0 = self.last_robot.expect("robot pose of previous tick");
            let d = crate::geometry::pose_difference(&b.robot_pose, &r0);
            let mut s = prev;
            s.timestamp = b.t;
            s.pose = s.pose.retract(d.as_slice());
            s
        }
    }

    fn tick_factors(&self, node: usize, b: &MeasurementBundle, init: &Pose6, cf: u32, with_c: bool) -> Result<Vec<FactorSpec>> {
        let mut fs = Vec::new();
        let has_m = self.mode.motion() && node > 0;
        if has_m {
            let from = self.last_robot.expect("robot pose of previous tick");
            fs.push(FactorSpec::new(
                FactorKind::M { from: node - 1, to: node, robot_from: from, robot_to: b.robot_pose },
                self.noise.motion.clone(),
            )?);
        }
        match b.vision {
            Some(w) => fs.push(FactorSpec::new(FactorKind::V { node, measured: w }, self.noise.vision.clone())?),
            None if !has_m => {
                fs.push(FactorSpec::new(FactorKind::V { node, measured: *init }, self.noise.hold.clone())?)
            }
            None => {}
        }
        for (i, p) in self.geom.walls.points.iter().enumerate() {
            let point = PointRef::Wall(i);
            fs.push(FactorSpec::new(FactorKind::Q { node, point, nominal: p.nominal }, self.noise.prior.clone())?);
            if self.mode.contact() {
                let feature = Feature::Segment(*self.geom.walls.edge(p.side));
                fs.push(FactorSpec::new(FactorKind::L { node, point, feature }, self.noise.feature.clone())?);
            }
        }
        for (i, p) in self.geom.object.points.iter().enumerate() {
            let point = PointRef::Object(i);
            fs.push(FactorSpec::new(FactorKind::Q { node, point, nominal: p.nominal }, self.noise.prior.clone())?);
            if self.mode.contact() {
                fs.push(FactorSpec::new(FactorKind::L { node, point, feature: p.feature }, self.noise.feature.clone())?);
            }
        }
        if with_c && self.mode.contact() && cf != 0 {
            let pairs: Vec<(usize, usize)> = cf_constraint_pairs(cf, &self.geom.registry)?
                .iter()
                .map(|(o, w)| {
                    let oi = self.geom.object.point_index(o).ok_or(Error::UnknownCf(cf))?;
                    let wi = self.geom.walls.point_index(w).ok_or(Error::UnknownCf(cf))?;
                    Ok((oi, wi))
                })
                .collect::<Result<_>>()?;
            if !pairs.is_empty() {
                let noise = self.noise.contact(pairs.len())?;
                fs.push(FactorSpec::new(FactorKind::C { node, pairs }, noise)?);
            }
        }
        Ok(fs)
    }

    /// Adds the tick's node and factors, updates the graph and reports the
    /// estimate of the new node.
    pub fn step(&mut self, b: &MeasurementBundle) -> Result<EstimateRecord> {
        let started = Instant::now();
        if let Some(prev) = self.last_t {
            if !(b.t > prev) {
                return Err(Error::TimeRegression { prev, got: b.t });
            }
        }
        let cf = self.filtered_cf(b.predicted_cf);
        let init = self.initial_state(b);
        let init_pose = init.pose;
        let uses_c = self.mode.contact() && cf != 0;
        let backup = if uses_c { Some(self.graph.clone()) } else { None };
        let node = self.graph.add_node(init)?;
        for f in self.tick_factors(node, b, &init_pose, cf, true)? {
            self.graph.add_factor(f)?;
        }
        let outcome = self.graph.update();
        let failed = matches!(&outcome, Ok(Some(r)) if r.diverged);
        if let Some(saved) = backup.filter(|_| failed) {
            // misclassified contact: redo the tick without the C factor
            self.graph = saved;
            self.dropped_c += 1;
            let init = self.initial_state(b);
            let node = self.graph.add_node(init)?;
            for f in self.tick_factors(node, b, &init_pose, cf, false)? {
                self.graph.add_factor(f)?;
            }
            self.graph.update()?;
        } else {
            outcome?;
        }
        self.last_robot = Some(b.robot_pose);
        self.last_t = Some(b.t);
        let est = self.graph.estimate(node).expect("node just added");
        let rec = EstimateRecord {
            t: b.t,
            pose: est.pose,
            wall_points: self.graph.layout().wall_points.iter().cloned().zip(est.wall_points.iter().copied()).collect(),
            object_points: self
                .graph
                .layout()
                .object_points
                .iter()
                .cloned()
                .zip(est.object_points.iter().copied())
                .collect(),
            cf,
            latency_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        Ok(rec)
    }

    /// Final batch solve; returns the smoothed estimates of every node.
    pub fn finish(&mut self) -> Result<Vec<TimestepState>> {
        if !self.graph.is_empty() {
            self.graph.batch_relinearize()?;
        }
        Ok(self.graph.estimates().to_vec())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<EstimateRecord>,
    pub timing: TimingStats,
}

/// Runs every tick of a trial.
pub fn run(stream: &TrialStream, geom: &Geometry, cfg: &EstimatorConfig, mode: Mode, source: CfSource) -> Result<RunOutput> {
    let mut est = Estimator::new(geom, cfg, mode)?;
    let mut records = Vec::new();
    let mut prev = None;
    for t in tick_times(stream, cfg.rate_hz) {
        let started = Instant::now();
        let mut b = aggregate_window(stream, prev, t)?;
        b.predicted_cf = match source {
            CfSource::Classifier(m) => m.predict(&b.wrench),
            CfSource::Truth => truth_cf_at(stream, t),
        };
        let mut rec = est.step(&b)?;
        rec.latency_ms = started.elapsed().as_secs_f64() * 1e3;
        records.push(rec);
        prev = Some(t);
    }
    let lat: Vec<f64> = records.iter().map(|r| r.latency_ms).collect();
    Ok(RunOutput { timing: TimingStats::from_latencies(&lat, est.dropped_c_ticks()), records })
}

/// Runs every trial; timing statistics pool the steps of all trials.
pub fn run_batch(
    trials: &[TrialStream],
    geom: &Geometry,
    cfg: &EstimatorConfig,
    mode: Mode,
    source: CfSource,
) -> Result<(Vec<Vec<EstimateRecord>>, TimingStats)> {
    let mut all = Vec::with_capacity(trials.len());
    let mut lat = Vec::new();
    let mut dropped = 0;
    for s in trials {
        let out = run(s, geom, cfg, mode, source)?;
        lat.extend(out.records.iter().map(|r| r.latency_ms));
        dropped += out.timing.dropped_c_factor_ticks;
        all.push(out.records);
    }
    Ok((all, TimingStats::from_latencies(&lat, dropped)))
}

fn truth_cf_at(stream: &TrialStream, t: f64) -> u32 {
    stream.truth.iter().rev().find(|r| r.t <= t).map(|r| r.cf).unwrap_or(0)
}
