//! Trajectory and contact-point error metrics against the ground-truth
//! sidecar. Everything here is in meters and radians; reports convert.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::pose::rotation_angle_between;
use crate::pipeline::EstimateRecord;
use crate::simulator::{TrialStream, TruthRecord};

/// Largest timestamp difference still treated as the same tick.
const TIME_MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub ticks: usize,
    pub contact_ticks: usize,
    pub translation_rmse: f64,
    pub rotation_rmse: f64,
    /// `None` when the trial has no contact-phase tick.
    pub contact_translation_rmse: Option<f64>,
    pub contact_rotation_rmse: Option<f64>,
    pub contact_point_rmse: Option<f64>,
    pub final_translation_error: f64,
    pub final_rotation_error: f64,
}

fn truth_at(truth: &[TruthRecord], t: f64) -> Option<&TruthRecord> {
    let i = truth.partition_point(|r| r.t < t - TIME_MATCH_TOL);
    truth.get(i).filter(|r| (r.t - t).abs() <= TIME_MATCH_TOL)
}

fn rms(sum_sq: f64, n: usize) -> Option<f64> {
    (n > 0).then(|| (sum_sq / n as f64).sqrt())
}

/// Errors of one trial's estimates; every estimate tick must have a truth
/// record with the same timestamp.
pub fn compute_metrics(est: &[EstimateRecord], truth: &TrialStream) -> Result<TrialMetrics> {
    if est.is_empty() {
        return Err(Error::Dataset("no estimates for trial".into()));
    }
    let (mut st, mut sr, mut sct, mut scr, mut scp) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut nc, mut ncp) = (0usize, 0usize);
    let (mut last_t, mut last_r) = (0.0, 0.0);
    for (i, e) in est.iter().enumerate() {
        let g = truth_at(&truth.truth, e.t).ok_or(Error::TimestampMismatch(i))?;
        let dt = (e.pose.translation() - g.pose.translation()).norm_squared();
        let dr = rotation_angle_between(&e.pose, &g.pose).powi(2);
        st += dt;
        sr += dr;
        last_t = dt.sqrt();
        last_r = dr.sqrt();
        if g.cf != 0 {
            nc += 1;
            sct += dt;
            scr += dr;
            for (id, p) in &g.contact_points {
                if let Some(q) = e.wall_points.get(id) {
                    scp += (q - p).norm_squared();
                    ncp += 1;
                }
            }
        }
    }
    let n = est.len();
    Ok(TrialMetrics {
        ticks: n,
        contact_ticks: nc,
        translation_rmse: (st / n as f64).sqrt(),
        rotation_rmse: (sr / n as f64).sqrt(),
        contact_translation_rmse: rms(sct, nc),
        contact_rotation_rmse: rms(scr, nc),
        contact_point_rmse: rms(scp, ncp),
        final_translation_error: last_t,
        final_rotation_error: last_r,
    })
}

/// Mean and sample standard deviation across trials.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Self::default();
        }
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, n }
    }

    pub fn scaled(self, k: f64) -> Self {
        Self { mean: self.mean * k, std: self.std * k, n: self.n }
    }
}

/// Across-trial summary of one estimation run, in mm and degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub translation_mm: MeanStd,
    pub rotation_deg: MeanStd,
    pub contact_translation_mm: MeanStd,
    pub contact_rotation_deg: MeanStd,
    pub contact_point_mm: MeanStd,
}

impl ModeSummary {
    /// Contact-phase statistics skip trials that never touch a wall.
    pub fn from_trials(m: &[TrialMetrics]) -> Self {
        let deg = 180.0 / std::f64::consts::PI;
        Self {
            translation_mm: MeanStd::of(m.iter().map(|t| t.translation_rmse)).scaled(1e3),
            rotation_deg: MeanStd::of(m.iter().map(|t| t.rotation_rmse)).scaled(deg),
            contact_translation_mm: MeanStd::of(m.iter().filter_map(|t| t.contact_translation_rmse)).scaled(1e3),
            contact_rotation_deg: MeanStd::of(m.iter().filter_map(|t| t.contact_rotation_rmse)).scaled(deg),
            contact_point_mm: MeanStd::of(m.iter().filter_map(|t| t.contact_point_rmse)).scaled(1e3),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SystemConfig;
    use crate::geometry::Pose6;
    use crate::simulator::{simulate_trial, TrialConfig};

    fn trial() -> TrialStream {
        let cfg = SystemConfig::rect_default();
        let g = cfg.geometry().unwrap();
        simulate_trial(&TrialConfig { index: 0, offset_x: 0.012, offset_yaw: 0.1, seed: 3 }, &cfg.simulator, &g)
    }

    fn perfect(s: &TrialStream) -> Vec<EstimateRecord> {
        s.truth
            .iter()
            .step_by(25)
            .map(|r| EstimateRecord {
                t: r.t,
                pose: r.pose,
                wall_points: r.contact_points.clone(),
                object_points: Default::default(),
                cf: r.cf,
                latency_ms: 0.0,
            })
            .collect()
    }

    #[test]
    fn exact_estimates_have_zero_error() {
        let s = trial();
        let m = compute_metrics(&perfect(&s), &s).unwrap();
        assert_eq!(m.translation_rmse, 0.0);
        assert_eq!(m.rotation_rmse, 0.0);
        assert!(m.contact_ticks > 0);
        assert_eq!(m.contact_point_rmse, Some(0.0));
    }

    #[test]
    fn constant_bias() {
        let s = trial();
        let mut e = perfect(&s);
        for r in &mut e {
            r.pose.x += 1e-3;
        }
        let m = compute_metrics(&e, &s).unwrap();
        assert!((m.translation_rmse * 1e3 - 1.0).abs() < 1e-12);
        assert!((m.contact_translation_rmse.unwrap() * 1e3 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn misaligned_tick_is_rejected() {
        let s = trial();
        let mut e = perfect(&s);
        e[3].t += 1e-4;
        assert!(matches!(compute_metrics(&e, &s), Err(Error::TimestampMismatch(3))));
        let one = vec![EstimateRecord { pose: Pose6::identity(), ..e[0].clone() }];
        assert!(compute_metrics(&one, &s).unwrap().contact_translation_rmse.is_none());
    }

    #[test]
    fn mean_std_sample() {
        let m = MeanStd::of([1.0, 2.0, 3.0]);
        assert_eq!((m.mean, m.std, m.n), (2.0, 1.0, 3));
        assert_eq!(MeanStd::of([]).n, 0);
    }
}
