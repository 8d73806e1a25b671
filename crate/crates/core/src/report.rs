//! Report artifacts: plot-ready CSV tables, runtime JSON and a Markdown
//! summary. All functions are pure; the caller writes the strings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::classifier::{LearningPoint, TrainingSummary};
use crate::error::Result;
use crate::metrics::{MeanStd, ModeSummary};
use crate::pipeline::{Mode, TimingStats};

/// Metrics and timing of one estimation run (one geometry, one mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub geometry: String,
    pub mode: Mode,
    pub trials: usize,
    pub metrics: ModeSummary,
    pub timing: TimingStats,
}

fn cell(m: &MeanStd) -> String {
    format!("{:.2}±{:.2}", m.mean, m.std)
}

fn sorted(rows: &[&RunSummary]) -> Vec<RunSummary> {
    let mut v: Vec<RunSummary> = rows.iter().map(|r| (*r).clone()).collect();
    v.sort_by_key(|r| r.mode);
    v
}

/// Pose error table (one row per mode): whole-trajectory and contact-phase
/// translation (mm) and rotation (deg), each `mean±std` over trials.
pub fn pose_table_csv(rows: &[&RunSummary]) -> String {
    let mut s = String::from("mode,trans_mm,rot_deg,trans_c_mm,rot_c_deg\n");
    for r in sorted(rows) {
        let m = &r.metrics;
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.mode,
            cell(&m.translation_mm),
            cell(&m.rotation_deg),
            cell(&m.contact_translation_mm),
            cell(&m.contact_rotation_deg)
        );
    }
    s
}

pub fn contact_point_table_csv(rows: &[&RunSummary]) -> String {
    let mut s = String::from("mode,contact_point_mm\n");
    for r in sorted(rows) {
        let _ = writeln!(s, "{},{}", r.mode, cell(&r.metrics.contact_point_mm));
    }
    s
}

pub fn confusion_csv(labels: &[u32], counts: &[Vec<u64>]) -> String {
    let mut s = String::from("truth\\pred");
    for l in labels {
        let _ = write!(s, ",{l}");
    }
    s.push('\n');
    for (l, row) in labels.iter().zip(counts) {
        let _ = write!(s, "{l}");
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

pub fn learning_curve_csv(points: &[LearningPoint]) -> String {
    let mut s = String::from("size,mean_accuracy,std_accuracy,min_accuracy,max_accuracy\n");
    for p in points {
        let ms = MeanStd::of(p.accuracies.iter().copied());
        let min = p.accuracies.iter().copied().fold(f64::INFINITY, f64::min);
        let max = p.accuracies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(s, "{},{:.6},{:.6},{:.6},{:.6}", p.size, p.mean_accuracy, ms.std, min, max);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RuntimeEntry {
    geometry: String,
    mode: Mode,
    #[serde(flatten)]
    timing: TimingStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClassifierRuntime {
    geometry: String,
    predict_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Runtime {
    budget_ms: f64,
    estimator: Vec<RuntimeEntry>,
    classifier: Vec<ClassifierRuntime>,
}

/// Step latency budget of a 10 Hz estimator.
pub const STEP_BUDGET_MS: f64 = 100.0;

pub fn runtime_json(runs: &[RunSummary], classifiers: &[TrainingSummary]) -> Result<String> {
    let rt = Runtime {
        budget_ms: STEP_BUDGET_MS,
        estimator: runs
            .iter()
            .map(|r| RuntimeEntry { geometry: r.geometry.clone(), mode: r.mode, timing: r.timing.clone() })
            .collect(),
        classifier: classifiers
            .iter()
            .map(|c| ClassifierRuntime { geometry: c.geometry.clone(), predict_us: c.predict_us })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&rt)? + "\n")
}

pub fn markdown_summary(runs: &[RunSummary], classifiers: &[TrainingSummary]) -> String {
    let mut s = String::from("# Evaluation summary\n");
    let mut geoms: Vec<&str> = runs.iter().map(|r| r.geometry.as_str()).collect();
    geoms.sort_unstable();
    geoms.dedup();
    for g in geoms {
        let rows: Vec<RunSummary> = sorted(&runs.iter().filter(|r| r.geometry == g).collect::<Vec<_>>());
        let _ = writeln!(s, "\n## Pose error, {g}\n");
        s.push_str("| mode | trials | trans (mm) | rot (deg) | trans contact (mm) | rot contact (deg) | contact point (mm) | step mean / max (ms) |\n");
        s.push_str("|---|---|---|---|---|---|---|---|\n");
        for r in rows {
            let m = &r.metrics;
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} | {} | {:.2} / {:.2} |",
                r.mode,
                r.trials,
                cell(&m.translation_mm),
                cell(&m.rotation_deg),
                cell(&m.contact_translation_mm),
                cell(&m.contact_rotation_deg),
                cell(&m.contact_point_mm),
                r.timing.mean_ms,
                r.timing.max_ms
            );
        }
    }
    if !classifiers.is_empty() {
        s.push_str("\n## Contact-formation classifier\n\n");
        s.push_str("| geometry | C | gamma | CV acc. | CV acc. (all) | test acc. | adjacent error share | predict (us) |\n");
        s.push_str("|---|---|---|---|---|---|---|---|\n");
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.1}%", 100.0 * x));
        for c in classifiers {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} | {:.2} | {:.1} |",
                c.geometry,
                c.c,
                c.gamma,
                pct(Some(c.cv_accuracy)),
                pct(Some(c.cv_accuracy_ungated)),
                pct(c.test_accuracy),
                c.adjacent_error_share,
                c.predict_us
            );
        }
    }
    s
}
