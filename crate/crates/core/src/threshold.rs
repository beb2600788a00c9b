//! Closed-form splitting of a nonnegative column into sparse spikes and a
//! constant background.
//!
//! For `b >= 0` and `beta > 0` the problem
//!
//! ```text
//! minimize  1/2 ||s + mu e - b||^2 + beta ||s||_1   subject to s >= 0, mu >= 0
//! ```
//!
//! has a unique solution. Sort `b` descending as `b_(1) >= ... >= b_(n)` and
//! let `T_d = sum_{j > d} b_(j)`. The support size `d` is the unique value in
//! `0..n` with
//!
//! ```text
//! (n - d) b_(d) > T_d + n beta >= (n - d) b_(d+1),      b_(0) = +inf
//! ```
//!
//! and then `mu = (T_d + d beta) / (n - d)`, `s_(j) = b_(j) - beta - mu` for
//! `j <= d`. The left inequality is `s_(d) > 0`; the right one is the
//! off-support optimality condition for `b_(d+1)`. Because the right-hand
//! condition is monotone in `d`, the support size is the first `d` where it
//! holds. Tied values never straddle the boundary.
//!
//! The column mass is preserved: `sum(s) + n mu = sum(b)`.

use crate::error::{invalid_input, HoprError, Result};
use crate::exec::Exec;
use crate::sparse::{DenseMatrix, SparseColMatrix};

/// Largest length accepted by [`threshold_oracle`].
pub const ORACLE_MAX_N: usize = 12;

/// Solution `(s, mu)` of the spike/background split. `spikes` holds the
/// nonzero entries of `s`, sorted by index.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdResult {
    pub spikes: Vec<(usize, f64)>,
    pub mu: f64,
}

impl ThresholdResult {
    pub fn zero() -> Self {
        ThresholdResult { spikes: Vec::new(), mu: 0.0 }
    }

    pub fn support_size(&self) -> usize {
        self.spikes.len()
    }

    pub fn dense_spikes(&self, n: usize) -> Vec<f64> {
        let mut s = vec![0.0; n];
        for &(i, v) in &self.spikes {
            s[i] = v;
        }
        s
    }

    /// `s + mu e`.
    pub fn reconstruct(&self, n: usize) -> Vec<f64> {
        let mut x = vec![self.mu; n];
        for &(i, v) in &self.spikes {
            x[i] += v;
        }
        x
    }

    /// `1/2 ||s + mu e - b||^2 + beta ||s||_1`.
    pub fn objective(&self, b: &[f64], beta: f64) -> f64 {
        let x = self.reconstruct(b.len());
        let fit: f64 = x.iter().zip(b).map(|(a, c)| (a - c) * (a - c)).sum();
        let l1: f64 = self.spikes.iter().map(|e| e.1).sum();
        0.5 * fit + beta * l1
    }

    /// Largest violation of the optimality conditions; zero for an exact
    /// solution.
    pub fn kkt_violation(&self, b: &[f64], beta: f64) -> f64 {
        let s = self.dense_spikes(b.len());
        let mut worst: f64 = 0.0;
        let mut grad_mu = 0.0;
        for (&si, &bi) in s.iter().zip(b) {
            let r = si + self.mu - bi;
            grad_mu += r;
            if si > 0.0 {
                worst = worst.max((r + beta).abs());
            } else {
                worst = worst.max(-(r + beta));
            }
            if si < 0.0 {
                worst = worst.max(-si);
            }
        }
        if self.mu > 0.0 {
            worst = worst.max(grad_mu.abs());
        } else {
            worst = worst.max(-grad_mu).max(-self.mu);
        }
        worst
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta > 0.0 {
        Ok(())
    } else {
        Err(invalid_input(format!("beta must be positive, got {beta}")))
    }
}

fn check_column(b: &[f64]) -> Result<()> {
    if b.is_empty() {
        return Err(invalid_input("empty column"));
    }
    match b.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        Some(i) => Err(invalid_input(format!("entry {i} = {} is not nonnegative", b[i]))),
        None => Ok(()),
    }
}

/// Support size and background for values given as descending runs
/// `(value, multiplicity)` over a column of length `n`.
///
/// Returns `(number of runs kept as spikes, d, mu)`.
fn split_runs(runs: &[(f64, usize)], n: usize, beta: f64) -> (usize, usize, f64) {
    // tail[r] = sum of all values in runs r.. (accumulated from the smallest)
    let mut tail = vec![0.0; runs.len() + 1];
    for r in (0..runs.len()).rev() {
        tail[r] = tail[r + 1] + runs[r].0 * runs[r].1 as f64;
    }
    let nf = n as f64;
    let mut d = 0usize;
    for (r, &(value, count)) in runs.iter().enumerate() {
        let rest = (n - d) as f64;
        if tail[r] + nf * beta >= rest * value {
            return (r, d, (tail[r] + d as f64 * beta) / rest);
        }
        d += count;
    }
    // The last run has tail == (n - d) * value, so the loop always returns.
    unreachable!("bracketing condition never satisfied")
}

/// Solves the spike/background split of a dense nonnegative column.
///
/// Ties in the sort are broken by ascending index.
pub fn threshold(b: &[f64], beta: f64) -> Result<ThresholdResult> {
    check_beta(beta)?;
    check_column(b)?;
    Ok(threshold_unchecked(b, beta))
}

pub(crate) fn threshold_unchecked(b: &[f64], beta: f64) -> ThresholdResult {
    let n = b.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| b[y].total_cmp(&b[x]).then(x.cmp(&y)));
    let runs: Vec<(f64, usize)> = order.iter().map(|&i| (b[i], 1)).collect();
    let (kept, _, mu) = split_runs(&runs, n, beta);
    let mut spikes: Vec<(usize, f64)> = order[..kept]
        .iter()
        .map(|&i| (i, b[i] - beta - mu))
        .filter(|e| e.1 > 0.0)
        .collect();
    spikes.sort_unstable_by_key(|e| e.0);
    ThresholdResult { spikes, mu }
}

/// Split of a column of length `n` whose entries equal `floor` everywhere
/// except at the listed `(index, value)` positions.
///
/// Runs in `O(k log k)` for `k` listed entries instead of `O(n log n)`.
/// Listed indices must be distinct and smaller than `n`.
pub fn threshold_spiked(
    n: usize,
    floor: f64,
    entries: &[(usize, f64)],
    beta: f64,
) -> Result<ThresholdResult> {
    check_beta(beta)?;
    if n == 0 || entries.len() > n {
        return Err(invalid_input("column length smaller than listed entries"));
    }
    if !(floor.is_finite() && floor >= 0.0) {
        return Err(invalid_input(format!("floor {floor} is not nonnegative")));
    }
    if let Some(e) = entries.iter().find(|e| e.0 >= n || !(e.1.is_finite() && e.1 >= 0.0)) {
        return Err(invalid_input(format!("bad entry {e:?}")));
    }
    Ok(threshold_spiked_unchecked(n, floor, entries, beta))
}

pub(crate) fn threshold_spiked_unchecked(
    n: usize,
    floor: f64,
    entries: &[(usize, f64)],
    beta: f64,
) -> ThresholdResult {
    let mut sorted: Vec<(usize, f64)> = entries.to_vec();
    sorted.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    let n_floor = n - sorted.len();
    let above = sorted.partition_point(|e| e.1 > floor);
    let mut runs: Vec<(f64, usize)> = Vec::with_capacity(sorted.len() + 1);
    runs.extend(sorted[..above].iter().map(|e| (e.1, 1)));
    if n_floor > 0 {
        runs.push((floor, n_floor));
    }
    runs.extend(sorted[above..].iter().map(|e| (e.1, 1)));

    let (kept, _, mu) = split_runs(&runs, n, beta);
    // the floor run is never kept as spikes unless entries below it exist and
    // the floor itself lies above the background
    let mut spikes: Vec<(usize, f64)> = Vec::new();
    if kept <= above {
        spikes.extend(sorted[..kept].iter().map(|e| (e.0, e.1 - beta - mu)));
    } else {
        // The floor run and some entries below it are spikes: materialise it.
        let listed: std::collections::HashSet<usize> = sorted.iter().map(|e| e.0).collect();
        spikes.extend(sorted[..above].iter().map(|e| (e.0, e.1 - beta - mu)));
        let floor_spike = floor - beta - mu;
        spikes.extend((0..n).filter(|i| !listed.contains(i)).map(|i| (i, floor_spike)));
        let below_kept = kept - above - usize::from(n_floor > 0);
        spikes.extend(sorted[above..above + below_kept].iter().map(|e| (e.0, e.1 - beta - mu)));
    }
    spikes.retain(|e| e.1 > 0.0);
    spikes.sort_unstable_by_key(|e| e.0);
    ThresholdResult { spikes, mu }
}

/// Exhaustive reference solver: tries every support, solves the reduced
/// quadratic in closed form on each face (`mu` free or `mu = 0`), keeps the
/// feasible candidates that satisfy the off-support conditions and returns
/// the one with the smallest objective.
pub fn threshold_oracle(b: &[f64], beta: f64) -> Result<ThresholdResult> {
    check_beta(beta)?;
    check_column(b)?;
    let n = b.len();
    if n > ORACLE_MAX_N {
        return Err(HoprError::UnsupportedSize { n, max: ORACLE_MAX_N });
    }
    const SLACK: f64 = 1e-12;
    let mut best: Option<(f64, ThresholdResult)> = None;
    for mask in 0u32..(1u32 << n) {
        let support: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let d = support.len();
        let off_sum: f64 = (0..n).filter(|i| mask >> i & 1 == 0).map(|i| b[i]).sum();
        let mut mus = vec![0.0];
        if d < n {
            mus.push((off_sum + d as f64 * beta) / (n - d) as f64);
        }
        for mu in mus {
            let spikes: Vec<(usize, f64)> = support.iter().map(|&i| (i, b[i] - beta - mu)).collect();
            if spikes.iter().any(|e| e.1 < -SLACK) || mu < 0.0 {
                continue;
            }
            let off_ok = (0..n)
                .filter(|i| mask >> i & 1 == 0)
                .all(|i| mu - b[i] + beta >= -SLACK);
            if !off_ok {
                continue;
            }
            let cand = ThresholdResult {
                spikes: spikes.into_iter().filter(|e| e.1 > 0.0).collect(),
                mu,
            };
            let obj = cand.objective(b, beta);
            if best.as_ref().is_none_or(|(o, _)| obj < *o) {
                best = Some((obj, cand));
            }
        }
    }
    Ok(best.map(|(_, r)| r).unwrap_or_else(ThresholdResult::zero))
}

/// Applies [`threshold`] to every column of `a`; column `j` gives
/// `S(:, j)` and `u(j)`.
pub fn threshold_matrix(
    a: &DenseMatrix,
    beta: f64,
    exec: Exec,
) -> Result<(SparseColMatrix, Vec<f64>)> {
    check_beta(beta)?;
    if !a.is_nonnegative() {
        return Err(invalid_input("matrix has negative or non-finite entries"));
    }
    let cols = exec.map_range(a.n_cols(), |j| threshold_unchecked(a.column(j), beta));
    let u = cols.iter().map(|r| r.mu).collect();
    let spikes: Vec<Vec<(usize, f64)>> = cols.into_iter().map(|r| r.spikes).collect();
    Ok((SparseColMatrix::from_columns(a.n_rows(), &spikes)?, u))
}

/// `T~(A)` reconstructed densely: column `j` is `s_j + mu_j e`.
pub fn threshold_matrix_dense(a: &DenseMatrix, beta: f64, exec: Exec) -> Result<DenseMatrix> {
    check_beta(beta)?;
    let cols = exec.map_range(a.n_cols(), |j| threshold_unchecked(a.column(j), beta).reconstruct(a.n_rows()));
    DenseMatrix::from_columns(a.n_rows(), cols)
}
