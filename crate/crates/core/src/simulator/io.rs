//! JSON Lines dataset: one header line, then one line per record.
//!
//! ```text
//! {"schema_version":1,"kind":"test",...}
//! {"t":0.0,"trial":0,"channel":"trial","payload":{...}}
//! {"t":0.0,"trial":0,"channel":"robot","payload":[x,y,z,roll,pitch,yaw]}
//! ```
//!
//! Floats use the shortest representation that parses back to the same
//! `f64`, so a write/read cycle is exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GridKind, RobotRecord, TrialConfig, TrialStream, TruthRecord, VisionRecord, WrenchRecord};
use crate::classifier::Wrench6;
use crate::config::SimulatorConfig;
use crate::error::{Error, Result};
use crate::geometry::{Geometry, Pose6};

pub const DATASET_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub schema_version: u32,
    pub kind: GridKind,
    pub seed: u64,
    pub config: SimulatorConfig,
    pub geometry: Geometry,
    pub registry_hash: String,
    pub trials: usize,
}

impl DatasetHeader {
    pub fn new(kind: GridKind, seed: u64, config: SimulatorConfig, geometry: Geometry, trials: usize) -> Self {
        let registry_hash = geometry.registry.hash();
        Self { schema_version: DATASET_SCHEMA_VERSION, kind, seed, config, geometry, registry_hash, trials }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub trials: Vec<TrialStream>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrialMeta {
    config: TrialConfig,
    valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TruthPayload {
    pose: Pose6,
    cf: u32,
    #[serde(default, skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    contact_points: std::collections::BTreeMap<String, crate::geometry::Point3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "channel", content = "payload", rename_all = "lowercase")]
enum Payload {
    Trial(TrialMeta),
    Robot(Pose6),
    Wrench(Wrench6),
    Vision(Option<Pose6>),
    Truth(TruthPayload),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Line {
    t: f64,
    trial: usize,
    #[serde(flatten)]
    payload: Payload,
}

fn trial_lines(i: usize, s: &TrialStream) -> Vec<Line> {
    let mut lines = vec![Line { t: 0.0, trial: i, payload: Payload::Trial(TrialMeta { config: s.config, valid: s.valid }) }];
    // (t, channel rank, line): robot, wrench, truth per tick, frames in between
    let mut recs: Vec<(f64, u8, Line)> = Vec::new();
    for r in &s.robot {
        recs.push((r.t, 0, Line { t: r.t, trial: i, payload: Payload::Robot(r.pose) }));
    }
    for r in &s.wrench {
        recs.push((r.t, 1, Line { t: r.t, trial: i, payload: Payload::Wrench(r.wrench) }));
    }
    for r in &s.truth {
        let p = TruthPayload { pose: r.pose, cf: r.cf, contact_points: r.contact_points.clone() };
        recs.push((r.t, 2, Line { t: r.t, trial: i, payload: Payload::Truth(p) }));
    }
    for r in &s.vision {
        recs.push((r.t, 3, Line { t: r.t, trial: i, payload: Payload::Vision(r.pose) }));
    }
    recs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    lines.extend(recs.into_iter().map(|r| r.2));
    lines
}

pub fn write_dataset(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &data.header)?;
    w.write_all(b"\n")?;
    for (i, s) in data.trials.iter().enumerate() {
        for line in trial_lines(i, s) {
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let header_text = match lines.next() {
        Some((_, l)) => l?,
        None => return Err(Error::Parse { line: 1, msg: "missing header".into() }),
    };
    let version: serde_json::Value =
        serde_json::from_str(&header_text).map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
    let found = version.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != DATASET_SCHEMA_VERSION {
        return Err(Error::SchemaVersion { expected: DATASET_SCHEMA_VERSION, found });
    }
    let header: DatasetHeader =
        serde_json::from_str(&header_text).map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
    let mut trials: Vec<TrialStream> = Vec::new();
    for (n, text) in lines {
        let lineno = n + 1;
        let text = text?;
        if text.trim().is_empty() {
            continue;
        }
        let line: Line = serde_json::from_str(&text).map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
        let bad = |msg: &str| Error::Parse { line: lineno, msg: msg.to_string() };
        if let Payload::Trial(meta) = &line.payload {
            if line.trial != trials.len() {
                return Err(bad("trial records out of order"));
            }
            trials.push(TrialStream {
                config: meta.config,
                valid: meta.valid,
                robot: Vec::new(),
                wrench: Vec::new(),
                vision: Vec::new(),
                truth: Vec::new(),
            });
            continue;
        }
        if trials.is_empty() || line.trial != trials.len() - 1 {
            return Err(bad("record does not belong to the current trial"));
        }
        let s = trials.last_mut().expect("non-empty");
        let t = line.t;
        let last = match &line.payload {
            Payload::Robot(_) => s.robot.last().map(|r| r.t),
            Payload::Wrench(_) => s.wrench.last().map(|r| r.t),
            Payload::Vision(_) => s.vision.last().map(|r| r.t),
            Payload::Truth(_) => s.truth.last().map(|r| r.t),
            Payload::Trial(_) => None,
        };
        if last.is_some_and(|prev| !(t > prev)) {
            return Err(bad("timestamps must increase within a channel"));
        }
        match line.payload {
            Payload::Robot(pose) => s.robot.push(RobotRecord { t, pose }),
            Payload::Wrench(wrench) => s.wrench.push(WrenchRecord { t, wrench }),
            Payload::Vision(pose) => s.vision.push(VisionRecord { t, pose }),
            Payload::Truth(p) => s.truth.push(TruthRecord { t, pose: p.pose, cf: p.cf, contact_points: p.contact_points }),
            Payload::Trial(_) => unreachable!("handled above"),
        }
    }
    if trials.len() != header.trials {
        return Err(Error::Dataset(format!("header announces {} trials, file has {}", header.trials, trials.len())));
    }
    Ok(Dataset { header, trials })
}

/// Hex SHA-256 of a file's bytes.
pub fn file_hash(path: &Path) -> Result<String> {
    Ok(crate::geometry::registry::hex_digest(&std::fs::read(path)?))
}
