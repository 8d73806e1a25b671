use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const STD_FLOOR: f64 = 1e-12;

/// Force-torque reading at the TCP.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench6 {
    pub fx: f64,
    pub fy: f64,
    pub fz: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
}

impl Wrench6 {
    pub fn from_array(a: [f64; 6]) -> Self {
        Self { fx: a[0], fy: a[1], fz: a[2], tx: a[3], ty: a[4], tz: a[5] }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.fx, self.fy, self.fz, self.tx, self.ty, self.tz]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl std::ops::Add for Wrench6 {
    type Output = Wrench6;
    fn add(self, o: Wrench6) -> Wrench6 {
        let (a, b) = (self.to_array(), o.to_array());
        Wrench6::from_array(std::array::from_fn(|i| a[i] + b[i]))
    }
}

impl std::ops::Mul<f64> for Wrench6 {
    type Output = Wrench6;
    fn mul(self, s: f64) -> Wrench6 {
        Wrench6::from_array(self.to_array().map(|v| v * s))
    }
}

/// Per-feature affine map to zero mean and unit population std.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: [f64; 6],
    pub std: [f64; 6],
}

impl Standardizer {
    pub fn fit(xs: &[[f64; 6]]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::Dataset("cannot standardize an empty dataset".into()));
        }
        let n = xs.len() as f64;
        let mut mean = [0.0; 6];
        for x in xs {
            for k in 0..6 {
                mean[k] += x[k];
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = [0.0; 6];
        for x in xs {
            for k in 0..6 {
                var[k] += (x[k] - mean[k]).powi(2);
            }
        }
        let std = var.map(|v| (v / n).sqrt());
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: &[f64; 6]) -> [f64; 6] {
        std::array::from_fn(|k| {
            if self.std[k] < STD_FLOOR {
                0.0
            } else {
                (x[k] - self.mean[k]) / self.std[k]
            }
        })
    }
}

/// Labeled wrench samples.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CfDataset {
    pub features: Vec<[f64; 6]>,
    pub labels: Vec<u32>,
}

const CSV_HEADER: [&str; 7] = ["fx", "fy", "fz", "tx", "ty", "tz", "cf"];

impl CfDataset {
    pub fn new(features: Vec<[f64; 6]>, labels: Vec<u32>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::Dataset("feature and label counts differ".into()));
        }
        if features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Dataset("non-finite wrench component".into()));
        }
        Ok(Self { features, labels })
    }

    /// Wrench samples labelled with the ground-truth CF of the same tick.
    /// `contact_only` keeps just the samples with CF ≠ 0.
    pub fn from_trials(trials: &[crate::simulator::TrialStream], contact_only: bool) -> Result<Self> {
        let mut d = CfDataset::default();
        for s in trials {
            for (w, g) in s.wrench.iter().zip(&s.truth) {
                if w.t != g.t {
                    return Err(Error::Dataset(format!("wrench and truth records misaligned at t = {}", w.t)));
                }
                if !contact_only || g.cf != 0 {
                    d.push(&w.wrench, g.cf);
                }
            }
        }
        Ok(d)
    }

    pub fn push(&mut self, w: &Wrench6, cf: u32) {
        self.features.push(w.to_array());
        self.labels.push(cf);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Sorted distinct labels.
    pub fn classes(&self) -> Vec<u32> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn subset(&self, idx: &[usize]) -> CfDataset {
        CfDataset {
            features: idx.iter().map(|&i| self.features[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Every `len/max`-th sample (uniform stride), keeping class priors.
    pub fn thin(&self, max: usize) -> CfDataset {
        if self.len() <= max {
            return self.clone();
        }
        let idx: Vec<usize> = (0..max).map(|k| k * self.len() / max).collect();
        self.subset(&idx)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(CSV_HEADER).map_err(csv_err)?;
        for (x, y) in self.features.iter().zip(&self.labels) {
            let mut rec: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
            rec.push(y.to_string());
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let header = r.headers().map_err(csv_err)?.clone();
        if header.iter().ne(CSV_HEADER.iter().copied()) {
            return Err(Error::Dataset(format!("expected header {}", CSV_HEADER.join(","))));
        }
        let mut out = CfDataset::default();
        for (i, rec) in r.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::Parse { line, msg: e.to_string() })?;
            let parse = |k: usize| -> Result<f64> {
                rec[k].trim().parse().map_err(|e: std::num::ParseFloatError| Error::Parse { line, msg: e.to_string() })
            };
            let x = [parse(0)?, parse(1)?, parse(2)?, parse(3)?, parse(4)?, parse(5)?];
            let y: u32 = rec[6].trim().parse().map_err(|e: std::num::ParseIntError| Error::Parse { line, msg: e.to_string() })?;
            out.features.push(x);
            out.labels.push(y);
        }
        Self::new(out.features, out.labels)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Dataset(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standardize_examples() {
        let s = Standardizer::fit(&[[-1.0, 5.0, 0.0, 0.0, 0.0, 0.0], [1.0, 5.0, 0.0, 0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(s.apply(&[-1.0, 5.0, 0.0, 0.0, 0.0, 0.0]), [-1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(s.apply(&[1.0, 5.0, 0.0, 0.0, 0.0, 0.0])[0], 1.0);
        assert!(Standardizer::fit(&[]).is_err());
    }

    #[test]
    fn standardized_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<[f64; 6]> = (0..500).map(|_| std::array::from_fn(|k| rng.gen_range(-3.0..5.0) * (k + 1) as f64)).collect();
        let s = Standardizer::fit(&xs).unwrap();
        let zs: Vec<[f64; 6]> = xs.iter().map(|x| s.apply(x)).collect();
        let z = Standardizer::fit(&zs).unwrap();
        for k in 0..6 {
            assert!(z.mean[k].abs() < 1e-12);
            assert!((z.std[k] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_roundtrip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let d = CfDataset::new(vec![[0.1, -2.5, 1e-17, 3.0, 0.0, 1.0 / 3.0]; 3], vec![0, 4, 8]).unwrap();
        d.write_csv(&p).unwrap();
        assert_eq!(CfDataset::read_csv(&p).unwrap(), d);
        std::fs::write(&p, "fx,fy,fz,tx,ty,tz,cf\n1,2,3,4,5,6,1\n1,2,x,4,5,6,1\n").unwrap();
        assert!(matches!(CfDataset::read_csv(&p), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn thinning_keeps_stride() {
        let d = CfDataset::new(vec![[0.0; 6]; 10], (0..10).collect()).unwrap();
        assert_eq!(d.thin(5).labels, vec![0, 2, 4, 6, 8]);
        assert_eq!(d.thin(20).len(), 10);
    }
}
