//! Synthetic insertion trials: misalignment grids, constant-velocity descent
//! onto the walls with suction-cup compliance, noisy sensor channels and a
//! ground-truth sidecar.

pub mod contact;
pub mod io;
pub mod vision;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use contact::{contact_wrench, solve_deflection, synth_wrench, ContactForce, Deflection};
pub use io::{read_dataset, write_dataset, Dataset, DatasetHeader};
pub use vision::corrupt_vision;

use crate::classifier::Wrench6;
use crate::config::{GridConfig, SimulatorConfig};
use crate::geometry::{groundtruth_contact_points, label_cf_groundtruth, Geometry, Point3, Pose6, DEFAULT_LABEL_TOL};

/// Upper bound on a trial's length before it is cut off as invalid.
const MAX_TRIAL_SECONDS: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Train,
    Test,
}

impl std::str::FromStr for GridKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(GridKind::Train),
            "test" => Ok(GridKind::Test),
            other => Err(format!("unknown grid kind {other:?}, expected train or test")),
        }
    }
}

/// `n × n` offsets, evenly spaced with endpoints; `x` outer, yaw inner.
pub fn generate_grid(g: &GridConfig) -> Vec<(f64, f64)> {
    let axis = |max: f64| -> Vec<f64> {
        if g.n == 1 {
            vec![0.0]
        } else {
            (0..g.n).map(|i| -max + 2.0 * max * i as f64 / (g.n - 1) as f64).collect()
        }
    };
    let (xs, ys) = (axis(g.max_offset_x), axis(g.max_offset_yaw));
    xs.iter().flat_map(|&x| ys.iter().map(move |&y| (x, y))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub index: usize,
    pub offset_x: f64,
    pub offset_yaw: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotRecord {
    pub t: f64,
    pub pose: Pose6,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WrenchRecord {
    pub t: f64,
    pub wrench: Wrench6,
}

/// A camera frame; `pose` is `None` when the detection dropped out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisionRecord {
    pub t: f64,
    pub pose: Option<Pose6>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub t: f64,
    pub pose: Pose6,
    pub cf: u32,
    /// Ground-truth wall contact points by wall point id (empty for CF 0).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub contact_points: BTreeMap<String, Point3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStream {
    pub config: TrialConfig,
    pub valid: bool,
    pub robot: Vec<RobotRecord>,
    pub wrench: Vec<WrenchRecord>,
    pub vision: Vec<VisionRecord>,
    pub truth: Vec<TruthRecord>,
}

impl TrialStream {
    pub fn duration(&self) -> f64 {
        self.robot.last().map(|r| r.t).unwrap_or(0.0)
    }

    pub fn record_count(&self) -> usize {
        self.robot.len() + self.wrench.len() + self.vision.len() + self.truth.len()
    }
}

/// Per-trial generators: wrench and vision noise draw from separate streams
/// so switching one noise source off leaves the other unchanged.
fn trial_rngs(seed: u64, index: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut w = ChaCha8Rng::seed_from_u64(seed);
    w.set_stream(2 * index as u64);
    let mut v = ChaCha8Rng::seed_from_u64(seed);
    v.set_stream(2 * index as u64 + 1);
    (w, v)
}

/// Runs one trial: descend at constant speed until the measured `|f_z|`
/// exceeds the stop force, then (optionally) retreat to the start height.
pub fn simulate_trial(trial: &TrialConfig, sim: &SimulatorConfig, geom: &Geometry) -> TrialStream {
    let (mut wrng, mut vrng) = trial_rngs(trial.seed, trial.index);
    let grasp_inv = geom.object.tcp_to_object().inverse();
    let start = Pose6::new(trial.offset_x, 0.0, sim.approach_clearance, 0.0, 0.0, trial.offset_yaw).compose(&grasp_inv);
    let dt = 1.0 / sim.robot_rate;
    let max_ticks = (MAX_TRIAL_SECONDS * sim.robot_rate) as usize;
    let mut out = TrialStream {
        config: *trial,
        valid: true,
        robot: Vec::new(),
        wrench: Vec::new(),
        vision: Vec::new(),
        truth: Vec::new(),
    };
    let mut stop_tick: Option<usize> = None;
    for k in 0..max_ticks {
        let t = k as f64 * dt;
        let drop = match stop_tick {
            None => sim.descent_speed * t,
            Some(s) => {
                let down = sim.descent_speed * s as f64 * dt;
                let up = sim.descent_speed * (k - s) as f64 * dt;
                if up >= down {
                    break;
                }
                down - up
            }
        };
        let mut tcp = start;
        tcp.z -= drop;
        let defl = match solve_deflection(&tcp, geom, &sim.compliance) {
            Ok(d) => d,
            Err(_) => {
                out.valid = false;
                break;
            }
        };
        let wrench = synth_wrench(&tcp, &defl.contacts, &sim.compliance.wrench_noise, &mut wrng);
        let cf = label_cf_groundtruth(&defl.object_pose, geom, DEFAULT_LABEL_TOL);
        let contact_points = if cf == 0 {
            BTreeMap::new()
        } else {
            groundtruth_contact_points(&defl.object_pose, geom, cf)
        };
        out.robot.push(RobotRecord { t, pose: tcp });
        out.wrench.push(WrenchRecord { t, wrench });
        out.truth.push(TruthRecord { t, pose: defl.object_pose, cf, contact_points });
        if stop_tick.is_none() && wrench.fz.abs() > sim.contact_force_stop {
            if !sim.retreat {
                break;
            }
            stop_tick = Some(k);
        }
        if k + 1 == max_ticks {
            out.valid = false;
        }
    }
    // camera frames, each showing the pose `latency` frames earlier
    let end = out.duration();
    let frame_dt = 1.0 / sim.vision_rate;
    let mut m = 0usize;
    loop {
        let t = m as f64 * frame_dt;
        if t > end + 1e-12 || out.truth.is_empty() {
            break;
        }
        let src = (t - sim.vision.latency_frames as f64 * frame_dt).max(0.0);
        let tick = ((src * sim.robot_rate + 1e-9).floor() as usize).min(out.truth.len() - 1);
        let pose = corrupt_vision(&out.truth[tick].pose, &sim.vision, &mut vrng);
        out.vision.push(VisionRecord { t, pose });
        m += 1;
    }
    out
}

/// Simulates every grid point of `kind`; trial `i` draws from stream `i`
/// of `seed`.
pub fn simulate_batch(kind: GridKind, sim: &SimulatorConfig, geom: &Geometry, seed: u64) -> Vec<TrialStream> {
    let grid = match kind {
        GridKind::Train => &sim.train_grid,
        GridKind::Test => &sim.test_grid,
    };
    generate_grid(grid)
        .into_iter()
        .enumerate()
        .map(|(index, (offset_x, offset_yaw))| {
            simulate_trial(&TrialConfig { index, offset_x, offset_yaw, seed }, sim, geom)
        })
        .collect()
}
