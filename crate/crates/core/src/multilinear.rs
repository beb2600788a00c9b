//! Multilinear PageRank baseline.
//!
//! The rank-one model looks for a stochastic `x` with
//! `x = alpha P (x kron x) + (1 - alpha) v`. With the slices regrouped as
//! `Q~_k(i, j) = Q_j(i, k)` the tensor apply becomes `sum_j x_j Q~_j x`, so
//! neither the `n^2`-long vector `x kron x` nor the dangling vectors are
//! formed.

use std::time::Instant;

use crate::error::{check_dim, invalid_config, invalid_input, Result};
use crate::exec::Exec;
use crate::operators::{IterControl, IterationReport};
use crate::sparse::{merge_duplicates, DenseMatrix, SliceSet, SparseColMatrix, StochVector};

/// Slices regrouped along the previous state: `Q~_k(i, j) = Q_j(i, k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlattenedSliceSet {
    n: usize,
    slices: Vec<SparseColMatrix>,
}

impl FlattenedSliceSet {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn slice(&self, k: usize) -> &SparseColMatrix {
        &self.slices[k]
    }

    pub fn nnz(&self) -> usize {
        self.slices.iter().map(SparseColMatrix::nnz).sum()
    }
}

/// Moves every stored `Q_j(i, k)` to `Q~_k(i, j)` by re-bucketing entries.
pub fn permute_to_flattened(slices: &SliceSet) -> FlattenedSliceSet {
    let n = slices.n();
    let mut buckets: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); n];
    for (i, j, k, v) in slices.entries() {
        buckets[k].push((i, j, v));
    }
    let slices = buckets
        .into_iter()
        .map(|t| SparseColMatrix::from_triplets(n, n, t).expect("permuted entries stay valid"))
        .collect();
    FlattenedSliceSet { n, slices }
}

/// Inverse of [`permute_to_flattened`].
pub fn permute_from_flattened(flat: &FlattenedSliceSet) -> SliceSet {
    let n = flat.n;
    let mut buckets: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); n];
    for (k, q) in flat.slices.iter().enumerate() {
        for (i, j, v) in q.triplets() {
            buckets[j].push((i, k, v));
        }
    }
    let slices = buckets
        .into_iter()
        .map(|t| SparseColMatrix::from_triplets(n, n, t).expect("permuted entries stay valid"))
        .collect();
    SliceSet::new(n, slices).expect("columns keep their sums")
}

/// `sum_j x_j Q~_j x`, i.e. `Q~ (x kron x)`.
///
/// Partial products are computed per `j` (in parallel under
/// [`Exec::Parallel`]) and summed in index order, so the result does not
/// depend on the strategy.
pub fn ml_matvec(flat: &FlattenedSliceSet, x: &[f64], exec: Exec) -> Result<Vec<f64>> {
    check_dim(flat.n, x.len())?;
    Ok(ml_matvec_unchecked(flat, x, exec))
}

fn ml_matvec_unchecked(flat: &FlattenedSliceSet, x: &[f64], exec: Exec) -> Vec<f64> {
    let active: Vec<usize> = (0..flat.n).filter(|&j| x[j] != 0.0 && flat.slices[j].nnz() > 0).collect();
    let parts = exec.map_indices(&active, |j| flat.slices[j].spmv_sparse(|k| x[k]));
    let mut m = vec![0.0; flat.n];
    for (&j, part) in active.iter().zip(parts) {
        for (i, v) in part {
            m[i] += x[j] * v;
        }
    }
    m
}

/// Fixed-point iteration `x <- alpha m + (alpha/n)(1 - ||m||_1) e + (1 - alpha) v`
/// with `m = ml_matvec(x)`. Every iterate sums to one.
///
/// `v` and `x0` default to `e / n`. A unique solution is only guaranteed for
/// `alpha < 1/2`; larger values run but the report carries a note.
pub fn ml_fixed_point(
    flat: &FlattenedSliceSet,
    v: Option<&StochVector>,
    alpha: f64,
    ctl: &IterControl,
    x0: Option<&StochVector>,
) -> Result<(StochVector, IterationReport)> {
    ctl.validate()?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid_config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let n = flat.n;
    let uniform = StochVector::uniform(n);
    let v = v.unwrap_or(&uniform);
    check_dim(n, v.len())?;
    let mut x: Vec<f64> = x0.unwrap_or(&uniform).to_vec();
    check_dim(n, x.len())?;

    let mut report = IterationReport::default();
    if alpha >= 0.5 {
        report
            .notes
            .push(format!("alpha = {alpha} >= 1/2: the fixed point need not be unique"));
    }
    let start = Instant::now();
    for _ in 0..ctl.max_iter {
        let m = ml_matvec_unchecked(flat, &x, ctl.exec);
        let spread = alpha / n as f64 * (1.0 - m.iter().sum::<f64>());
        let next: Vec<f64> = m
            .iter()
            .zip(v.iter())
            .map(|(mi, vi)| alpha * mi + spread + (1.0 - alpha) * vi)
            .collect();
        let change: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        x = next;
        report.iterations += 1;
        report.residual_history.push(change);
        if change <= ctl.tol {
            report.converged = true;
            break;
        }
    }
    report.wall_time = start.elapsed().as_secs_f64();
    Ok((StochVector::new_unchecked(x), report))
}

/// `x x^T`, the second-order matrix implied by a multilinear solution.
pub fn rank_one_lift(x: &StochVector) -> DenseMatrix {
    DenseMatrix::outer(x)
}

/// `||x x^T - X||_l1 / ||X||_l1`.
pub fn rank_one_error(x: &StochVector, reference: &DenseMatrix) -> Result<f64> {
    check_dim(x.len(), reference.n_rows())?;
    check_dim(x.len(), reference.n_cols())?;
    let total = reference.l1_norm();
    if total == 0.0 {
        return Err(invalid_input("reference has zero mass"));
    }
    Ok(rank_one_lift(x).l1_distance(reference) / total)
}

/// `Q~ (x kron x)` assembled from the explicit `n x n^2` matrix and the
/// explicit Kronecker product. Reference for small sizes only.
pub fn ml_matvec_kron(flat: &FlattenedSliceSet, x: &[f64]) -> Result<Vec<f64>> {
    let n = flat.n;
    check_dim(n, x.len())?;
    let kron: Vec<f64> = (0..n * n).map(|c| x[c / n] * x[c % n]).collect();
    let mut wide: Vec<(usize, f64)> = Vec::new();
    for (j, q) in flat.slices.iter().enumerate() {
        for (i, k, v) in q.triplets() {
            wide.push((i, v * kron[j * n + k]));
        }
    }
    let mut out = vec![0.0; n];
    for (i, v) in merge_duplicates(wide) {
        out[i] = v;
    }
    Ok(out)
}
