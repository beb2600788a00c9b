//! The exact higher-order PageRank operator and the dense reference power
//! method.
//!
//! For a nonnegative `n x n` matrix `A`, column `j` of `W(A)` is
//!
//! ```text
//! W(A)(:, j) = alpha P_j r + (1 - alpha) ||r||_1 v,        r = A(j, :)^T
//! ```
//!
//! with `P_j = Q_j + (1/n) e d_j^T` the dangling-corrected slice. The
//! correction is never formed: `d_j^T r = ||r||_1 - ||Q_j r||_1` for `r >= 0`,
//! so only `Q_j` is touched.

use std::time::Instant;

use crate::error::{check_dim, invalid_config, invalid_input, Result};
use crate::exec::Exec;
use crate::sparse::{DenseMatrix, SliceSet, StochVector};

/// Largest `n` for which the dense reference path allocates an `n x n`
/// iterate by default.
pub const DEFAULT_DENSE_LIMIT: usize = 5000;

/// A second-order PageRank instance: slices, teleport vector and damping.
#[derive(Clone, Debug)]
pub struct HoprProblem<'a> {
    slices: &'a SliceSet,
    teleport: StochVector,
    alpha: f64,
    uniform_teleport: bool,
}

impl<'a> HoprProblem<'a> {
    pub fn new(slices: &'a SliceSet, teleport: StochVector, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid_config(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        check_dim(slices.n(), teleport.len())?;
        let uniform_teleport = teleport.is_uniform();
        Ok(HoprProblem { slices, teleport, alpha, uniform_teleport })
    }

    /// Problem with the uniform teleport vector `e / n`.
    pub fn uniform(slices: &'a SliceSet, alpha: f64) -> Result<Self> {
        HoprProblem::new(slices, StochVector::uniform(slices.n()), alpha)
    }

    pub fn n(&self) -> usize {
        self.slices.n()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn slices(&self) -> &'a SliceSet {
        self.slices
    }

    pub fn teleport(&self) -> &StochVector {
        &self.teleport
    }

    pub fn has_uniform_teleport(&self) -> bool {
        self.uniform_teleport
    }
}

/// Iteration controls shared by all solvers.
#[derive(Clone, Copy, Debug)]
pub struct IterControl {
    /// Stop once the relative l1 change of the iterate drops to this value.
    pub tol: f64,
    pub max_iter: usize,
    pub exec: Exec,
    /// Largest `n` the dense reference path accepts.
    pub dense_limit: usize,
}

impl Default for IterControl {
    fn default() -> Self {
        IterControl { tol: 1e-8, max_iter: 200, exec: Exec::default(), dense_limit: DEFAULT_DENSE_LIMIT }
    }
}

impl IterControl {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        IterControl { tol, max_iter, ..Default::default() }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(invalid_config(format!("tol must be nonnegative, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(invalid_config("max_iter must be at least 1"));
        }
        Ok(())
    }
}

/// What a solver did: per-iteration relative changes, active column counts
/// (partial updating only), timing and the sparsity of the final `S`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterationReport {
    pub iterations: usize,
    pub converged: bool,
    pub residual_history: Vec<f64>,
    pub active_columns_history: Vec<usize>,
    /// Solve time in seconds, excluding any I/O.
    pub wall_time: f64,
    /// Fraction of nonzero entries of `S`, when the method produces one.
    pub final_sparsity: Option<f64>,
    pub notes: Vec<String>,
}

impl IterationReport {
    pub fn final_residual(&self) -> Option<f64> {
        self.residual_history.last().copied()
    }
}

/// `W(A)(:, j)` given the row `r = A(j, :)^T`.
pub(crate) fn w_column(problem: &HoprProblem<'_>, j: usize, row: &[f64]) -> Vec<f64> {
    let n = problem.n();
    let alpha = problem.alpha;
    let qr = problem
        .slices
        .slice(j)
        .spmv(row)
        .expect("row length equals slice width");
    let mass: f64 = row.iter().sum();
    let q_mass: f64 = qr.iter().sum();
    let spread = alpha / n as f64 * (mass - q_mass);
    let tele = (1.0 - alpha) * mass;
    qr.iter()
        .zip(problem.teleport.iter())
        .map(|(q, v)| alpha * q + spread + tele * v)
        .collect()
}

/// Column `j` of `W(X)`.
pub fn apply_w_column(problem: &HoprProblem<'_>, x: &DenseMatrix, j: usize) -> Result<Vec<f64>> {
    check_dim(problem.n(), x.n_rows())?;
    check_dim(problem.n(), x.n_cols())?;
    if j >= problem.n() {
        return Err(invalid_input(format!("column {j} out of range")));
    }
    Ok(w_column(problem, j, &x.row(j)))
}

/// The full operator `W(A)`.
pub fn apply_w(problem: &HoprProblem<'_>, a: &DenseMatrix, exec: Exec) -> Result<DenseMatrix> {
    check_dim(problem.n(), a.n_rows())?;
    check_dim(problem.n(), a.n_cols())?;
    let rows = a.transpose();
    let cols = exec.map_range(problem.n(), |j| w_column(problem, j, rows.column(j)));
    DenseMatrix::from_columns(problem.n(), cols)
}

/// `||X - W(X)||_l1`: how far `X` is from satisfying the fixed-point
/// equations column by column.
pub fn model_residual(problem: &HoprProblem<'_>, x: &DenseMatrix) -> Result<f64> {
    let w = apply_w(problem, x, Exec::default())?;
    Ok(w.l1_distance(x))
}

/// Power iteration `X <- W(X)` on a dense iterate.
///
/// Columns are updated Jacobi-style from the previous iterate. Stops when
/// `||X_new - X||_l1 / ||X||_l1 <= tol`; on hitting `max_iter` the last
/// iterate is returned with `converged = false`.
pub fn power_method(
    problem: &HoprProblem<'_>,
    x0: Option<&DenseMatrix>,
    ctl: &IterControl,
) -> Result<(DenseMatrix, IterationReport)> {
    ctl.validate()?;
    let n = problem.n();
    if n > ctl.dense_limit {
        return Err(invalid_config(format!(
            "dense reference limited to n <= {}, got {n}",
            ctl.dense_limit
        )));
    }
    let mut x = match x0 {
        Some(x0) => {
            check_dim(n, x0.n_rows())?;
            check_dim(n, x0.n_cols())?;
            if !x0.is_nonnegative() || (x0.l1_norm() - 1.0).abs() > 1e-12 {
                return Err(invalid_input("initial iterate must be nonnegative with unit l1 mass"));
            }
            x0.clone()
        }
        None => DenseMatrix::uniform(n),
    };

    let start = Instant::now();
    let mut report = IterationReport::default();
    for _ in 0..ctl.max_iter {
        let next = apply_w(problem, &x, ctl.exec)?;
        let change = next.l1_distance(&x) / x.l1_norm();
        x = next;
        report.iterations += 1;
        report.residual_history.push(change);
        if change <= ctl.tol {
            report.converged = true;
            break;
        }
    }
    report.wall_time = start.elapsed().as_secs_f64();
    Ok((x, report))
}
