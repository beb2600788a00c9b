//! Sparse-plus-uniform approximations `X ~ S + e u^T`, their PageRank
//! values and error metrics against a reference.

use crate::error::{check_dim, invalid_input, Result};
use crate::sparse::{DenseMatrix, SparseColMatrix};

/// `X = S + e u^T`: sparse spikes `S` plus a background `u(j)` broadcast
/// down column `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseUniformApprox {
    s: SparseColMatrix,
    u: Vec<f64>,
}

impl SparseUniformApprox {
    pub fn new(s: SparseColMatrix, u: Vec<f64>) -> Result<Self> {
        check_dim(s.n_rows(), s.n_cols())?;
        check_dim(s.n_cols(), u.len())?;
        if let Some(v) = u.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(invalid_input(format!("background value {v} is not nonnegative")));
        }
        Ok(SparseUniformApprox { s, u })
    }

    /// `S = 0`, `u = (1/n^2) e`: the uniform distribution with unit mass.
    pub fn uniform(n: usize) -> Self {
        SparseUniformApprox {
            s: SparseColMatrix::empty(n, n),
            u: vec![1.0 / (n as f64 * n as f64); n],
        }
    }

    /// Stores a dense matrix entirely in `S`, with zero background.
    pub fn from_dense(x: &DenseMatrix) -> Result<Self> {
        let n = x.n_rows();
        let cols: Vec<Vec<(usize, f64)>> = (0..x.n_cols())
            .map(|k| x.column(k).iter().copied().enumerate().filter(|e| e.1 != 0.0).collect())
            .collect();
        SparseUniformApprox::new(SparseColMatrix::from_columns(n, &cols)?, vec![0.0; x.n_cols()])
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn spikes(&self) -> &SparseColMatrix {
        &self.s
    }

    pub fn background(&self) -> &[f64] {
        &self.u
    }

    pub fn into_parts(self) -> (SparseColMatrix, Vec<f64>) {
        (self.s, self.u)
    }

    /// Fraction of nonzero entries in `S`.
    pub fn sparsity(&self) -> f64 {
        let n = self.n() as f64;
        self.s.nnz() as f64 / (n * n)
    }

    /// `PV(j) = sum_i S(i, j) + u(j)`. The background is added once, not
    /// `n` times.
    pub fn pagerank_values(&self) -> Vec<f64> {
        let mut pv = self.u.clone();
        for (j, col) in self.s.columns() {
            pv[j] += col.sum();
        }
        pv
    }

    /// `||S + e u^T||_l1`.
    pub fn total_mass(&self) -> f64 {
        self.s.triplets().map(|t| t.2).sum::<f64>() + self.n() as f64 * self.u.iter().sum::<f64>()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        let mut c = vec![self.u[j]; self.n()];
        for (i, v) in self.s.column(j).iter() {
            c[i] += v;
        }
        c
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let cols = (0..self.n()).map(|j| self.column(j)).collect();
        DenseMatrix::from_columns(self.n(), cols).expect("columns have length n")
    }

    /// `||X - Y||_l1` computed column by column without densifying.
    pub fn l1_distance(&self, other: &SparseUniformApprox) -> Result<f64> {
        check_dim(self.n(), other.n())?;
        let n = self.n();
        let mut total = 0.0;
        for j in 0..n {
            let (a, b) = (self.s.column(j), other.s.column(j));
            let du = self.u[j] - other.u[j];
            let (mut p, mut q) = (0usize, 0usize);
            let mut touched = 0usize;
            while p < a.rows.len() || q < b.rows.len() {
                let ra = a.rows.get(p).copied().unwrap_or(usize::MAX);
                let rb = b.rows.get(q).copied().unwrap_or(usize::MAX);
                let diff = if ra == rb {
                    p += 1;
                    q += 1;
                    a.values[p - 1] - b.values[q - 1]
                } else if ra < rb {
                    p += 1;
                    a.values[p - 1]
                } else {
                    q += 1;
                    -b.values[q - 1]
                };
                total += (diff + du).abs();
                touched += 1;
            }
            total += (n - touched) as f64 * du.abs();
        }
        Ok(total)
    }

    /// `||X - X*||_l1 / ||X*||_l1`.
    pub fn relative_error(&self, reference: &SparseUniformApprox) -> Result<f64> {
        Ok(self.l1_distance(reference)? / reference.total_mass())
    }

    /// Relative l1 error against a dense reference.
    pub fn relative_error_dense(&self, reference: &DenseMatrix) -> Result<f64> {
        check_dim(self.n(), reference.n_cols())?;
        check_dim(self.n(), reference.n_rows())?;
        let dist: f64 = (0..self.n())
            .map(|j| {
                self.column(j)
                    .iter()
                    .zip(reference.column(j))
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
            })
            .sum();
        Ok(dist / reference.l1_norm())
    }

    /// `alpha X + (1 - alpha) G` for a sparse `G`; used to turn the iterate
    /// of the auxiliary-matrix method into its approximation.
    pub fn blend(&self, alpha: f64, g: &SparseColMatrix) -> Result<SparseUniformApprox> {
        check_dim(self.n(), g.n_cols())?;
        let mut t: Vec<(usize, usize, f64)> = self.s.triplets().map(|(i, k, v)| (i, k, alpha * v)).collect();
        t.extend(g.triplets().map(|(i, k, v)| (i, k, (1.0 - alpha) * v)));
        t.sort_unstable_by_key(|e| (e.1, e.0));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(t.len());
        for e in t {
            match merged.last_mut() {
                Some(last) if (last.0, last.1) == (e.0, e.1) => last.2 += e.2,
                _ => merged.push(e),
            }
        }
        let s = SparseColMatrix::from_triplets(self.n(), self.n(), merged)?;
        SparseUniformApprox::new(s, self.u.iter().map(|v| alpha * v).collect())
    }
}

/// Indices of the `k` largest values, largest first; ties go to the lower
/// index. `k` is clamped to the length.
pub fn top_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(k.min(values.len()));
    idx
}
