//! End-to-end classifier training from simulated trials: grid search on
//! contact-phase samples, confusion matrix, optional learning curve, and a
//! runtime model that also knows CF 0.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::cv::{confusion_matrix, cross_validate, cv_predictions, learning_curve, stratified_folds, GridPoint, LearningPoint};
use super::dataset::CfDataset;
use super::svm::{train_svm, SmoSettings, SvmModel};
use crate::config::ClassifierConfig;
use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::simulator::TrialStream;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub folds: usize,
    pub grid_c: Vec<f64>,
    pub grid_gamma: Vec<f64>,
    /// Learning-curve subsample sizes; `None` skips the curve.
    pub learning_curve_sizes: Option<Vec<usize>>,
    pub learning_curve_seeds: Vec<u64>,
}

impl TrainOptions {
    pub fn from_config(cfg: &ClassifierConfig) -> Self {
        Self {
            folds: cfg.folds,
            grid_c: cfg.grid_c.clone(),
            grid_gamma: cfg.grid_gamma.clone(),
            learning_curve_sizes: None,
            learning_curve_seeds: (0..5).collect(),
        }
    }
}

/// What `train-cf` records next to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub geometry: String,
    pub registry_hash: String,
    pub dataset_hash: String,
    pub c: f64,
    pub gamma: f64,
    pub folds: usize,
    /// Samples used for the grid search (contact-only, thinned).
    pub cv_samples: usize,
    /// Contact-only CV accuracy at the selected parameters.
    pub cv_accuracy: f64,
    /// CV accuracy including CF 0 samples.
    pub cv_accuracy_ungated: f64,
    pub grid: Vec<GridPoint>,
    pub test_accuracy: Option<f64>,
    pub test_accuracy_ungated: Option<f64>,
    pub labels: Vec<u32>,
    /// `confusion[i][j]`: truth `labels[i]` predicted as `labels[j]`
    /// (contact-phase test samples when given, CV predictions otherwise).
    pub confusion: Vec<Vec<u64>>,
    /// Share of misclassified samples whose (truth, prediction) pair is
    /// registry-adjacent.
    pub adjacent_error_share: f64,
    pub learning_curve: Option<Vec<LearningPoint>>,
    /// Mean wall-clock time of one prediction of the runtime model.
    pub predict_us: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub model: SvmModel,
    pub summary: TrainingSummary,
}

fn accuracy(model: &SvmModel, d: &CfDataset) -> f64 {
    let ok = d.features.iter().zip(&d.labels).filter(|(x, l)| model.predict_features(x) == **l).count();
    ok as f64 / d.len().max(1) as f64
}

/// Share of off-diagonal mass on registry-adjacent pairs.
pub fn adjacent_share(labels: &[u32], counts: &[Vec<u64>], geom: &Geometry) -> f64 {
    let (mut adj, mut off) = (0u64, 0u64);
    for (i, row) in counts.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if i != j {
                off += v;
                if geom.registry.adjacent(labels[i], labels[j]) {
                    adj += v;
                }
            }
        }
    }
    if off == 0 {
        1.0
    } else {
        adj as f64 / off as f64
    }
}

pub fn train_contact_classifier(
    train: &[TrialStream],
    test: Option<&[TrialStream]>,
    geom: &Geometry,
    cfg: &ClassifierConfig,
    opts: &TrainOptions,
    dataset_hash: String,
) -> Result<TrainOutput> {
    let gated_all = CfDataset::from_trials(train, true)?;
    if gated_all.is_empty() {
        return Err(Error::Dataset("no contact-phase samples in training data".into()));
    }
    let gated = gated_all.thin(cfg.max_train_samples);
    let template = SmoSettings {
        c: 1.0,
        gamma: 1.0,
        tolerance: cfg.tolerance,
        max_kernel_evals: cfg.max_kernel_evals,
        cache_bytes: cfg.cache_mb * 1024 * 1024,
    };
    let k = opts.folds;
    let cv = cross_validate(&gated, k, &opts.grid_c, &opts.grid_gamma, &template, cfg.seed)?;
    let best = SmoSettings { c: cv.best.c, gamma: cv.best.gamma, ..template };

    let ungated = CfDataset::from_trials(train, false)?.thin(cfg.max_train_samples);
    let ungated_folds = stratified_folds(&ungated.labels, k, cfg.seed)?;
    let (_, cv_ungated) = cv_predictions(&ungated, &ungated_folds, k, &best)?;
    let runtime_model = train_svm(&ungated, &best)?;

    let labels: Vec<u32> = geom.registry.ids().into_iter().filter(|&l| l != 0).collect();
    let (test_acc, test_acc_all, confusion) = match test {
        Some(t) => {
            let gated_model = train_svm(&gated, &best)?;
            let tg = CfDataset::from_trials(t, true)?;
            let ta = CfDataset::from_trials(t, false)?;
            let pred: Vec<u32> = tg.features.iter().map(|x| gated_model.predict_features(x)).collect();
            let cm = confusion_matrix(&pred, &tg.labels, &labels)?;
            (Some(accuracy(&gated_model, &tg)), Some(accuracy(&runtime_model, &ta)), cm)
        }
        None => {
            let folds = stratified_folds(&gated.labels, k, cfg.seed)?;
            let (pred, _) = cv_predictions(&gated, &folds, k, &best)?;
            (None, None, confusion_matrix(&pred, &gated.labels, &labels)?)
        }
    };
    let curve = match &opts.learning_curve_sizes {
        Some(sizes) => Some(learning_curve(&gated_all, sizes, &opts.learning_curve_seeds, k, &best)?),
        None => None,
    };

    let probe: Vec<[f64; 6]> = ungated.features.iter().take(1000).copied().collect();
    let started = Instant::now();
    let mut sink = 0u64;
    for x in &probe {
        sink += runtime_model.predict_features(x) as u64;
    }
    std::hint::black_box(sink);
    let predict_us = started.elapsed().as_secs_f64() * 1e6 / probe.len().max(1) as f64;

    let summary = TrainingSummary {
        geometry: geom.name.clone(),
        registry_hash: geom.registry.hash(),
        dataset_hash,
        c: best.c,
        gamma: best.gamma,
        folds: k,
        cv_samples: gated.len(),
        cv_accuracy: cv.best.accuracy,
        cv_accuracy_ungated: cv_ungated,
        grid: cv.grid,
        test_accuracy: test_acc,
        test_accuracy_ungated: test_acc_all,
        adjacent_error_share: adjacent_share(&labels, &confusion, geom),
        labels,
        confusion,
        learning_curve: curve,
        predict_us,
    };
    Ok(TrainOutput { model: runtime_model, summary })
}
