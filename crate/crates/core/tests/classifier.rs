use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tacfuse_core::classifier::svm::rbf;
use tacfuse_core::classifier::{cross_validate, smo, train_svm, CfDataset, SmoSettings};
use tacfuse_core::config::SystemConfig;
use tacfuse_core::simulator::{simulate_batch, GridKind};

fn tight(c: f64, gamma: f64) -> SmoSettings {
    SmoSettings { tolerance: 1e-10, ..SmoSettings::new(c, gamma) }
}

fn pad(x: f64, y: f64) -> [f64; 6] {
    [x, y, 0.0, 0.0, 0.0, 0.0]
}

fn dual_objective(xs: &[[f64; 6]], ys: &[f64], alpha: &[f64], gamma: f64) -> f64 {
    let n = xs.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * ys[i] * ys[j] * rbf(gamma, &xs[i], &xs[j]);
        }
    }
    0.5 * quad - alpha.iter().sum::<f64>()
}

/// Exhaustive active-set solve of `min ½αᵀQα − eᵀα, 0 ≤ α ≤ C, yᵀα = 0`:
/// every bound/free assignment is tried through its KKT system.
fn dense_qp(xs: &[[f64; 6]], ys: &[f64], c: f64, gamma: f64) -> (Vec<f64>, f64) {
    let n = xs.len();
    let q = DMatrix::from_fn(n, n, |i, j| ys[i] * ys[j] * rbf(gamma, &xs[i], &xs[j]));
    let mut best: Option<(Vec<f64>, f64)> = None;
    for code in 0..3usize.pow(n as u32) {
        // 0: at zero, 1: at C, 2: free
        let state: Vec<usize> = (0..n).map(|i| code / 3usize.pow(i as u32) % 3).collect();
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut alpha: Vec<f64> = state.iter().map(|&s| if s == 1 { c } else { 0.0 }).collect();
        if !free.is_empty() {
            let m = free.len();
            let mut kkt = DMatrix::zeros(m + 1, m + 1);
            let mut rhs = DVector::zeros(m + 1);
            for (a, &i) in free.iter().enumerate() {
                for (b, &j) in free.iter().enumerate() {
                    kkt[(a, b)] = q[(i, j)];
                }
                kkt[(a, m)] = ys[i];
                kkt[(m, a)] = ys[i];
                let fixed: f64 = (0..n).filter(|&j| state[j] == 1).map(|j| q[(i, j)] * c).sum();
                rhs[a] = 1.0 - fixed;
            }
            rhs[m] = -(0..n).filter(|&j| state[j] == 1).map(|j| ys[j] * c).sum::<f64>();
            let Some(sol) = kkt.lu().solve(&rhs) else { continue };
            for (a, &i) in free.iter().enumerate() {
                alpha[i] = sol[a];
            }
        }
        let eq: f64 = alpha.iter().zip(ys).map(|(a, y)| a * y).sum();
        if eq.abs() > 1e-9 || alpha.iter().any(|&a| a < -1e-12 || a > c + 1e-12) {
            continue;
        }
        let obj = dual_objective(xs, ys, &alpha, gamma);
        if best.as_ref().is_none_or(|b| obj < b.1) {
            best = Some((alpha, obj));
        }
    }
    best.expect("alpha = 0 is always feasible")
}

#[test]
fn xor_dual_matches_closed_form_and_dense_qp() {
    let xs = [pad(1.0, 1.0), pad(-1.0, -1.0), pad(1.0, -1.0), pad(-1.0, 1.0)];
    let ys = [1.0, 1.0, -1.0, -1.0];
    let gamma = 1.0;
    let sol = smo(&xs, &ys, &tight(10.0, gamma));
    // by symmetry every multiplier equals 1 / (1 − e^{−4γ})²
    let closed = 1.0 / (1.0 - (-4.0 * gamma).exp()).powi(2);
    let (qp, _) = dense_qp(&xs, &ys, 10.0, gamma);
    for i in 0..4 {
        assert!((sol.alpha[i] - closed).abs() < 1e-8, "{:?}", sol.alpha);
        assert!((qp[i] - closed).abs() < 1e-9);
    }
    assert!(sol.bias.abs() < 1e-8);

    let data = CfDataset::new(xs.to_vec(), vec![1, 1, 2, 2]).unwrap();
    let model = train_svm(&data, &SmoSettings::new(10.0, 1.0)).unwrap();
    for (x, l) in xs.iter().zip(&data.labels) {
        assert_eq!(model.predict_features(x), *l);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn smo_reaches_the_dense_qp_optimum(
        pts in prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), 6),
        c in 0.2..20.0f64,
        gamma in 0.1..3.0f64,
    ) {
        let xs: Vec<[f64; 6]> = pts.iter().map(|&(x, y)| pad(x, y)).collect();
        let ys = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
        let sol = smo(&xs, &ys, &tight(c, gamma));
        let eq: f64 = sol.alpha.iter().zip(&ys).map(|(a, y)| a * y).sum();
        prop_assert!(eq.abs() < 1e-9);
        prop_assert!(sol.alpha.iter().all(|&a| (0.0..=c).contains(&a)));
        let (_, best) = dense_qp(&xs, &ys, c, gamma);
        let got = dual_objective(&xs, &ys, &sol.alpha, gamma);
        prop_assert!(got - best < 1e-7 * best.abs().max(1.0), "smo {got} qp {best}");
    }
}

#[test]
fn shuffled_labels_give_chance_accuracy() {
    let cfg = SystemConfig::rect_default();
    let g = cfg.geometry().unwrap();
    let trials = simulate_batch(GridKind::Test, &cfg.simulator, &g, 5);
    let real = CfDataset::from_trials(&trials, true).unwrap().thin(1500);
    let mut labels = real.labels.clone();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(3));
    let shuffled = CfDataset::new(real.features.clone(), labels).unwrap();
    let majority = real
        .classes()
        .iter()
        .map(|c| real.labels.iter().filter(|l| *l == c).count())
        .max()
        .unwrap() as f64
        / real.len() as f64;
    let cv = cross_validate(&shuffled, 5, &[1.0, 10.0], &[0.1, 1.0], &SmoSettings::new(1.0, 1.0), 0).unwrap();
    assert!(
        (cv.best.accuracy - majority).abs() <= 0.05,
        "shuffled accuracy {:.3}, majority frequency {majority:.3}",
        cv.best.accuracy
    );
    let honest = cross_validate(&real, 5, &[10.0], &[1.0], &SmoSettings::new(1.0, 1.0), 0).unwrap();
    assert!(honest.best.accuracy > majority + 0.2);
}
