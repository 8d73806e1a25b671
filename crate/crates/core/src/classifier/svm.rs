//! RBF-kernel SVM: binary machines trained by SMO, combined one-vs-one.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::dataset::{CfDataset, Standardizer, Wrench6};
use crate::error::{Error, Result};

pub const MODEL_VERSION: u32 = 1;

/// Pairs whose quadratic coefficient is at most this are treated as `TAU`.
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoSettings {
    pub c: f64,
    pub gamma: f64,
    pub tolerance: f64,
    pub max_kernel_evals: u64,
    pub cache_bytes: usize,
}

impl SmoSettings {
    pub fn new(c: f64, gamma: f64) -> Self {
        Self { c, gamma, tolerance: 1e-3, max_kernel_evals: 10_000_000, cache_bytes: 64 << 20 }
    }
}

#[inline]
pub fn rbf(gamma: f64, a: &[f64; 6], b: &[f64; 6]) -> f64 {
    let mut d = 0.0;
    for k in 0..6 {
        let t = a[k] - b[k];
        d += t * t;
    }
    (-gamma * d).exp()
}

/// Kernel rows with least-recently-used eviction under a byte budget.
struct KernelCache<'a> {
    xs: &'a [[f64; 6]],
    gamma: f64,
    rows: HashMap<usize, (u64, Vec<f64>)>,
    capacity: usize,
    clock: u64,
    evals: u64,
}

impl<'a> KernelCache<'a> {
    fn new(xs: &'a [[f64; 6]], gamma: f64, bytes: usize) -> Self {
        let row_bytes = (xs.len() * 8).max(1);
        Self { xs, gamma, rows: HashMap::new(), capacity: (bytes / row_bytes).max(2), clock: 0, evals: 0 }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        self.clock += 1;
        let clock = self.clock;
        if !self.rows.contains_key(&i) {
            if self.rows.len() >= self.capacity {
                let oldest = *self.rows.iter().min_by_key(|(_, (t, _))| *t).map(|(k, _)| k).expect("cache non-empty");
                self.rows.remove(&oldest);
            }
            let xi = self.xs[i];
            let row: Vec<f64> = self.xs.iter().map(|x| rbf(self.gamma, &xi, x)).collect();
            self.evals += row.len() as u64;
            self.rows.insert(i, (clock, row));
        }
        let entry = self.rows.get_mut(&i).expect("row present");
        entry.0 = clock;
        &entry.1
    }
}

/// Dual solution of one binary problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub max_violation: f64,
    pub kernel_evals: u64,
}

/// SMO with second-order working-set selection on
/// `min ½αᵀQα − eᵀα, 0 ≤ α ≤ C, yᵀα = 0` with `Q_ij = y_i y_j K(x_i, x_j)`.
/// The decision function is `Σ α_i y_i K(x_i, x) + bias`.
pub fn smo(xs: &[[f64; 6]], ys: &[f64], s: &SmoSettings) -> BinarySolution {
    let n = xs.len();
    let c = s.c;
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut cache = KernelCache::new(xs, s.gamma, s.cache_bytes);
    let up = |a: f64, y: f64| (y > 0.0 && a < c) || (y < 0.0 && a > 0.0);
    let low = |a: f64, y: f64| (y > 0.0 && a > 0.0) || (y < 0.0 && a < c);
    let mut iterations = 0;
    let mut violation;
    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if up(alpha[t], ys[t]) && -ys[t] * grad[t] > gmax {
                gmax = -ys[t] * grad[t];
                i = t;
            }
        }
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        if i != usize::MAX {
            let ki: Vec<f64> = cache.row(i).to_vec();
            for t in 0..n {
                if !low(alpha[t], ys[t]) {
                    continue;
                }
                gmax2 = gmax2.max(ys[t] * grad[t]);
                let b = gmax + ys[t] * grad[t];
                if b > 0.0 {
                    let a = (2.0 - 2.0 * ki[t]).max(TAU);
                    let gain = -b * b / a;
                    if gain < best {
                        best = gain;
                        j = t;
                    }
                }
            }
        }
        violation = gmax + gmax2;
        if i == usize::MAX || j == usize::MAX || violation < s.tolerance || cache.evals >= s.max_kernel_evals {
            break;
        }
        iterations += 1;
        let ki: Vec<f64> = cache.row(i).to_vec();
        let kj: Vec<f64> = cache.row(j).to_vec();
        let (yi, yj) = (ys[i], ys[j]);
        let (ai, aj) = (alpha[i], alpha[j]);
        let quad = (2.0 - 2.0 * ki[j]).max(TAU);
        if yi != yj {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            let (mut ni, mut nj) = (ai + delta, aj + delta);
            if diff > 0.0 && nj < 0.0 {
                nj = 0.0;
                ni = diff;
            } else if diff <= 0.0 && ni < 0.0 {
                ni = 0.0;
                nj = -diff;
            }
            if diff > 0.0 && ni > c {
                ni = c;
                nj = c - diff;
            } else if diff <= 0.0 && nj > c {
                nj = c;
                ni = c + diff;
            }
            alpha[i] = ni;
            alpha[j] = nj;
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            let (mut ni, mut nj) = (ai - delta, aj + delta);
            if sum > c && ni > c {
                ni = c;
                nj = sum - c;
            } else if sum <= c && nj < 0.0 {
                nj = 0.0;
                ni = sum;
            }
            if sum > c && nj > c {
                nj = c;
                ni = sum - c;
            } else if sum <= c && ni < 0.0 {
                ni = 0.0;
                nj = sum;
            }
            alpha[i] = ni;
            alpha[j] = nj;
        }
        let (dai, daj) = (alpha[i] - ai, alpha[j] - aj);
        for t in 0..n {
            grad[t] += ys[t] * (yi * ki[t] * dai + yj * kj[t] * daj);
        }
    }
    // bias: average over free vectors, else the midpoint of the feasible range
    let (mut ub, mut lb, mut sum, mut nfree) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for t in 0..n {
        let yg = ys[t] * grad[t];
        if alpha[t] >= c {
            if ys[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if ys[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            nfree += 1;
            sum += yg;
        }
    }
    let rho = if nfree > 0 { sum / nfree as f64 } else { 0.5 * (ub + lb) };
    BinarySolution { alpha, bias: -rho, iterations, max_violation: violation, kernel_evals: cache.evals }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMachine {
    /// Label voted for by a positive decision value.
    pub positive: u32,
    pub negative: u32,
    pub support_vectors: Vec<[f64; 6]>,
    /// `α_i·y_i` per support vector.
    pub coefficients: Vec<f64>,
    pub bias: f64,
}

impl BinaryMachine {
    pub fn decision(&self, gamma: f64, z: &[f64; 6]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, c)| c * rbf(gamma, sv, z))
            .sum::<f64>()
            + self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub version: u32,
    pub c: f64,
    pub gamma: f64,
    pub labels: Vec<u32>,
    pub standardizer: Standardizer,
    pub machines: Vec<BinaryMachine>,
}

/// Trains one-vs-one machines on standardized features.
pub fn train_svm(data: &CfDataset, settings: &SmoSettings) -> Result<SvmModel> {
    if !(settings.c > 0.0 && settings.gamma > 0.0) {
        return Err(Error::Classifier("C and gamma must be positive".into()));
    }
    let labels = data.classes();
    if labels.len() < 2 {
        return Err(Error::Classifier("training needs at least two classes".into()));
    }
    let standardizer = Standardizer::fit(&data.features)?;
    let zs: Vec<[f64; 6]> = data.features.iter().map(|x| standardizer.apply(x)).collect();
    let mut machines = Vec::new();
    for (a_idx, &a) in labels.iter().enumerate() {
        for &b in &labels[a_idx + 1..] {
            let idx: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == a || data.labels[i] == b).collect();
            let xs: Vec<[f64; 6]> = idx.iter().map(|&i| zs[i]).collect();
            let ys: Vec<f64> = idx.iter().map(|&i| if data.labels[i] == a { 1.0 } else { -1.0 }).collect();
            let sol = smo(&xs, &ys, settings);
            let (mut sv, mut coef) = (Vec::new(), Vec::new());
            for k in 0..xs.len() {
                if sol.alpha[k] > 0.0 {
                    sv.push(xs[k]);
                    coef.push(sol.alpha[k] * ys[k]);
                }
            }
            machines.push(BinaryMachine { positive: a, negative: b, support_vectors: sv, coefficients: coef, bias: sol.bias });
        }
    }
    Ok(SvmModel { version: MODEL_VERSION, c: settings.c, gamma: settings.gamma, labels, standardizer, machines })
}

impl SvmModel {
    pub fn predict_features(&self, x: &[f64; 6]) -> u32 {
        let z = self.standardizer.apply(x);
        let mut votes: Vec<(u32, usize)> = self.labels.iter().map(|&l| (l, 0)).collect();
        for m in &self.machines {
            let winner = if m.decision(self.gamma, &z) > 0.0 { m.positive } else { m.negative };
            if let Some(v) = votes.iter_mut().find(|(l, _)| *l == winner) {
                v.1 += 1;
            }
        }
        vote_winner(&votes)
    }

    pub fn predict(&self, w: &Wrench6) -> u32 {
        self.predict_features(&w.to_array())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: SvmModel = serde_json::from_str(text)?;
        if m.version != MODEL_VERSION {
            return Err(Error::SchemaVersion { expected: MODEL_VERSION, found: m.version });
        }
        Ok(m)
    }
}

/// Most votes wins; ties go to the lowest label. `votes` is sorted by label.
pub fn vote_winner(votes: &[(u32, usize)]) -> u32 {
    let mut best = votes[0];
    for v in &votes[1..] {
        if v.1 > best.1 {
            best = *v;
        }
    }
    best.0
}
