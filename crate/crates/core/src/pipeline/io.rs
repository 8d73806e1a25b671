//! Estimate files: a header line, then one line per estimator tick.
//!
//! Latencies are kept out of these files (they go to the timing JSON) so
//! that repeated runs produce identical bytes.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EstimateRecord, Mode, TimingStats};
use crate::error::{Error, Result};

pub const ESTIMATE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateHeader {
    pub schema_version: u32,
    pub mode: Mode,
    pub geometry: String,
    pub registry_hash: String,
    /// SHA-256 of the dataset the estimates were computed from.
    pub dataset_hash: String,
    /// SHA-256 of the classifier model, absent when ground-truth CFs were used.
    pub model_hash: Option<String>,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateFile {
    pub header: EstimateHeader,
    /// Per-trial records in tick order.
    pub trials: Vec<Vec<EstimateRecord>>,
}

#[derive(Serialize, Deserialize)]
struct Line<R> {
    t: f64,
    trial: usize,
    payload: R,
}

pub fn write_estimates(file: &EstimateFile, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &file.header)?;
    w.write_all(b"\n")?;
    for (trial, recs) in file.trials.iter().enumerate() {
        for r in recs {
            serde_json::to_writer(&mut w, &Line { t: r.t, trial, payload: r })?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_estimates(path: &Path) -> Result<EstimateFile> {
    let mut lines = BufReader::new(File::open(path)?).lines().enumerate();
    let text = match lines.next() {
        Some((_, l)) => l?,
        None => return Err(Error::Parse { line: 1, msg: "missing header".into() }),
    };
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
    let found = raw.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != ESTIMATE_SCHEMA_VERSION {
        return Err(Error::SchemaVersion { expected: ESTIMATE_SCHEMA_VERSION, found });
    }
    let header: EstimateHeader = serde_json::from_value(raw).map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
    let mut trials: Vec<Vec<EstimateRecord>> = vec![Vec::new(); header.trials];
    for (n, text) in lines {
        let lineno = n + 1;
        let text = text?;
        if text.trim().is_empty() {
            continue;
        }
        let line: Line<EstimateRecord> =
            serde_json::from_str(&text).map_err(|e| Error::Parse { line: lineno, msg: e.to_string() })?;
        let recs = trials
            .get_mut(line.trial)
            .ok_or_else(|| Error::Parse { line: lineno, msg: format!("trial {} beyond header count", line.trial) })?;
        if let Some(prev) = recs.last() {
            if !(line.t > prev.t) {
                return Err(Error::Parse { line: lineno, msg: "timestamps must increase within a trial".into() });
            }
        }
        recs.push(line.payload);
    }
    Ok(EstimateFile { header, trials })
}

pub fn write_timing(t: &TimingStats, path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(t)? + "\n")?;
    Ok(())
}

pub fn read_timing(path: &Path) -> Result<TimingStats> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
