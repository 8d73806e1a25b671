use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::CfDataset;
use super::svm::{train_svm, SmoSettings};
use crate::error::{Error, Result};

/// Fold index per sample. Each class is shuffled (by `seed`) and dealt
/// round-robin so every fold sees every class.
pub fn stratified_folds(labels: &[u32], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Classifier("cross-validation needs at least 2 folds".into()));
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    for c in classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if idx.len() < k {
            return Err(Error::Classifier(format!(
                "{k} folds but class {c} has only {} samples",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for (r, i) in idx.into_iter().enumerate() {
            fold[i] = r % k;
        }
    }
    Ok(fold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub c: f64,
    pub gamma: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best: GridPoint,
    pub grid: Vec<GridPoint>,
}

/// Held-out predictions of k-fold CV at one grid point, in sample order,
/// plus the mean per-fold accuracy.
pub fn cv_predictions(data: &CfDataset, folds: &[usize], k: usize, s: &SmoSettings) -> Result<(Vec<u32>, f64)> {
    let mut pred = vec![0u32; data.len()];
    let mut acc = 0.0;
    for f in 0..k {
        let train: Vec<usize> = (0..data.len()).filter(|&i| folds[i] != f).collect();
        let test: Vec<usize> = (0..data.len()).filter(|&i| folds[i] == f).collect();
        let model = train_svm(&data.subset(&train), s)?;
        let mut correct = 0;
        for &i in &test {
            pred[i] = model.predict_features(&data.features[i]);
            if pred[i] == data.labels[i] {
                correct += 1;
            }
        }
        acc += correct as f64 / test.len().max(1) as f64;
    }
    Ok((pred, acc / k as f64))
}

/// Grid search by stratified k-fold CV. Ties go to the smaller C, then the
/// smaller gamma.
pub fn cross_validate(
    data: &CfDataset,
    k: usize,
    grid_c: &[f64],
    grid_gamma: &[f64],
    template: &SmoSettings,
    seed: u64,
) -> Result<CvResult> {
    let folds = stratified_folds(&data.labels, k, seed)?;
    let mut cs = grid_c.to_vec();
    let mut gs = grid_gamma.to_vec();
    cs.sort_by(f64::total_cmp);
    gs.sort_by(f64::total_cmp);
    let mut grid = Vec::new();
    for &c in &cs {
        for &gamma in &gs {
            let s = SmoSettings { c, gamma, ..*template };
            let (_, accuracy) = cv_predictions(data, &folds, k, &s)?;
            grid.push(GridPoint { c, gamma, accuracy });
        }
    }
    let mut best = grid.first().cloned().ok_or_else(|| Error::Classifier("empty grid".into()))?;
    for g in &grid {
        if g.accuracy > best.accuracy {
            best = g.clone();
        }
    }
    Ok(CvResult { best, grid })
}

/// `counts[i][j]` = samples of truth `labels[i]` predicted as `labels[j]`.
pub fn confusion_matrix(pred: &[u32], truth: &[u32], labels: &[u32]) -> Result<Vec<Vec<u64>>> {
    if pred.len() != truth.len() {
        return Err(Error::Classifier("prediction and truth lengths differ".into()));
    }
    let pos = |l: u32| {
        labels
            .iter()
            .position(|&x| x == l)
            .ok_or_else(|| Error::Classifier(format!("label {l} not in label list")))
    };
    let mut m = vec![vec![0u64; labels.len()]; labels.len()];
    for (&p, &t) in pred.iter().zip(truth) {
        m[pos(t)?][pos(p)?] += 1;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningPoint {
    pub size: usize,
    pub mean_accuracy: f64,
    pub accuracies: Vec<f64>,
}

/// CV accuracy at fixed hyper-parameters on random subsets of each size,
/// one subset per seed.
pub fn learning_curve(
    data: &CfDataset,
    sizes: &[usize],
    seeds: &[u64],
    k: usize,
    s: &SmoSettings,
) -> Result<Vec<LearningPoint>> {
    let mut out = Vec::new();
    for &size in sizes {
        let size = size.min(data.len());
        let mut accs = Vec::new();
        for &seed in seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx: Vec<usize> = (0..data.len()).collect();
            idx.shuffle(&mut rng);
            idx.truncate(size);
            idx.sort_unstable();
            let sub = data.subset(&idx);
            let folds = stratified_folds(&sub.labels, k, seed)?;
            accs.push(cv_predictions(&sub, &folds, k, s)?.1);
        }
        let mean = accs.iter().sum::<f64>() / accs.len().max(1) as f64;
        out.push(LearningPoint { size, mean_accuracy: mean, accuracies: accs });
    }
    Ok(out)
}
