//! Upper-triangular square-root information matrix stored as a skyline:
//! row `r` keeps the dense span `R[r, r..r+len]`. New measurement rows are
//! folded in with Givens rotations.

/// Diagonal entries below this fraction of the largest one count as zero.
pub const SINGULAR_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SqrtInfo {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    /// Squared norm of the rotated-out residual (constant part of the cost).
    residual_sq: f64,
}

impl SqrtInfo {
    pub fn new(ncols: usize) -> Self {
        Self { rows: vec![Vec::new(); ncols], rhs: vec![0.0; ncols], residual_sq: 0.0 }
    }

    pub fn ncols(&self) -> usize {
        self.rows.len()
    }

    /// Grows the variable count; new rows start empty (all zero).
    pub fn resize(&mut self, ncols: usize) {
        self.rows.resize(ncols, Vec::new());
        self.rhs.resize(ncols, 0.0);
    }

    pub fn residual_sq(&self) -> f64 {
        self.residual_sq
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        if c < r {
            return 0.0;
        }
        self.rows[r].get(c - r).copied().unwrap_or(0.0)
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Folds the row `[0.. a ..0] · x = b`, where `a` is dense over columns
    /// `start..start + a.len()`, into `R` and the right-hand side.
    pub fn add_row(&mut self, start: usize, mut a: Vec<f64>, mut b: f64) {
        assert!(start + a.len() <= self.ncols(), "row exceeds variable count");
        // a[k] is the coefficient of column `base + k`
        let mut base = start;
        while let Some(lead) = a.iter().position(|v| *v != 0.0) {
            if lead > 0 {
                a.drain(..lead);
                base += lead;
            }
            let j = base;
            let row = &mut self.rows[j];
            if row.len() < a.len() {
                row.resize(a.len(), 0.0);
            } else if a.len() < row.len() {
                a.resize(row.len(), 0.0);
            }
            let (r, x) = (row[0], a[0]);
            let h = r.hypot(x);
            let (c, s) = (r / h, x / h);
            for k in 0..row.len() {
                let (u, v) = (row[k], a[k]);
                row[k] = c * u + s * v;
                a[k] = -s * u + c * v;
            }
            a[0] = 0.0;
            let (u, v) = (self.rhs[j], b);
            self.rhs[j] = c * u + s * v;
            b = -s * u + c * v;
        }
        self.residual_sq += b * b;
    }

    /// Solves `R·x = rhs`. A (near-)zero pivot reports the offending column.
    pub fn back_substitute(&self) -> Result<Vec<f64>, usize> {
        let n = self.ncols();
        let max_diag = self.rows.iter().filter_map(|r| r.first()).fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = SINGULAR_RTOL * max_diag;
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let row = &self.rows[r];
            let d = row.first().copied().unwrap_or(0.0);
            if !(d.abs() > tol) {
                return Err(r);
            }
            let mut acc = self.rhs[r];
            for (k, v) in row.iter().enumerate().skip(1) {
                acc -= v * x[r + k];
            }
            x[r] = acc / d;
        }
        Ok(x)
    }

    /// Dense copy of `R` for tests and debugging.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.ncols();
        nalgebra::DMatrix::from_fn(n, n, |r, c| self.get(r, c))
    }
}
