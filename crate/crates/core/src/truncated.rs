//! Truncated power iterations on the sparse-plus-uniform representation.
//!
//! Every method here keeps the iterate as `S + e u^T` and updates it column
//! by column: build the pre-threshold column `Y(:, j)` from row `j` of the
//! previous iterate, then split it with [`threshold`](crate::threshold).
//! The methods differ only in how `Y(:, j)` is formed:
//!
//! * [`tpm_ding`]: `Y(:, j) = P_j z`, `z = alpha (S(j, :)^T + u) + (1 - alpha) G(j, :)^T`,
//!   with the dangling vector `d_j` formed explicitly.
//! * [`tpm_variant`]: `alpha Q_j y + (alpha/n)(||y|| - ||Q_j y||) e + ((1 - alpha)/n) v`,
//!   `y = S(j, :)^T + u`.
//! * [`spm`](crate::sparse_pm::spm): as above with teleport weight `(1 - alpha) ||y||`.
//!
//! Partial updating restricts each sweep to the columns with the largest
//! PageRank values; the remaining columns are left untouched.

use std::time::Instant;

use crate::approx::{top_k, SparseUniformApprox};
use crate::error::{check_dim, invalid_config, invalid_input, Result};
use crate::exec::Exec;
use crate::operators::{HoprProblem, IterControl, IterationReport};
use crate::sparse::{DenseMatrix, SparseColMatrix};
use crate::threshold::{threshold_matrix_dense, threshold_spiked_unchecked, threshold_unchecked, ThresholdResult};

/// Mass tolerance for a user-supplied auxiliary matrix.
const AUX_MASS_TOL: f64 = 1e-10;

/// The auxiliary matrix `G` of the truncated power method.
#[derive(Clone, Debug, PartialEq)]
pub enum AuxMatrix {
    /// `G = (1/n) v e^T`, built from the problem's teleport vector.
    Teleport,
    /// Any nonnegative `n x n` matrix with total mass 1.
    Sparse(SparseColMatrix),
}

impl AuxMatrix {
    fn validate(&self, n: usize) -> Result<()> {
        if let AuxMatrix::Sparse(g) = self {
            check_dim(n, g.n_rows())?;
            check_dim(n, g.n_cols())?;
            let mass: f64 = g.triplets().map(|t| t.2).sum();
            if (mass - 1.0).abs() > AUX_MASS_TOL {
                return Err(invalid_input(format!("auxiliary matrix has mass {mass}, expected 1")));
            }
        }
        Ok(())
    }

    /// Dense copy of `G`.
    pub fn to_dense(&self, problem: &HoprProblem<'_>) -> DenseMatrix {
        let n = problem.n();
        match self {
            AuxMatrix::Teleport => {
                let v = problem.teleport();
                DenseMatrix::from_fn(n, n, |i, _| v[i] / n as f64)
            }
            AuxMatrix::Sparse(g) => g.to_dense(),
        }
    }
}

/// Parameters of the shrinking active set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartialUpdate {
    /// Floor on the number of active columns.
    pub varsigma: usize,
    /// Fraction of the previous active set that is kept.
    pub tau: f64,
    /// Number of initial sweeps over all columns.
    pub warmup: usize,
}

impl Default for PartialUpdate {
    fn default() -> Self {
        PartialUpdate { varsigma: 10, tau: 0.1, warmup: 1 }
    }
}

impl PartialUpdate {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.varsigma == 0 {
            return Err(invalid_config("varsigma must be at least 1"));
        }
        if self.varsigma > n {
            return Err(invalid_config(format!("varsigma = {} exceeds n = {n}", self.varsigma)));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(invalid_config(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if self.warmup == 0 {
            return Err(invalid_config("warmup must be at least 1"));
        }
        Ok(())
    }

    /// `max(floor(tau * prev), varsigma)`, never larger than `prev`.
    pub fn next_cardinality(&self, prev: usize) -> usize {
        // the small offset keeps products such as 0.29 * 100 from flooring to 28
        let kept = (self.tau * prev as f64 + 1e-9).floor() as usize;
        kept.max(self.varsigma).min(prev)
    }
}

/// Columns updated in one sweep, sorted by index.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveSet {
    members: Vec<usize>,
    law: PartialUpdate,
}

impl ActiveSet {
    /// All `n` columns.
    pub fn full(n: usize, law: PartialUpdate) -> Result<Self> {
        law.validate(n)?;
        Ok(ActiveSet { members: (0..n).collect(), law })
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn law(&self) -> PartialUpdate {
        self.law
    }

    pub fn contains(&self, j: usize) -> bool {
        self.members.binary_search(&j).is_ok()
    }

    pub fn is_subset_of(&self, other: &ActiveSet) -> bool {
        self.members.iter().all(|&j| other.contains(j))
    }
}

/// Keeps the members of `prev` with the largest PageRank values; the new
/// size is `max(floor(tau * |prev|), varsigma)`. Ties go to the lower
/// index. `q` is the sweep about to run and must be past the warmup.
pub fn shrink_active_set(prev: &ActiveSet, pv: &[f64], q: usize) -> Result<ActiveSet> {
    let law = prev.law;
    law.validate(pv.len())?;
    if q < law.warmup {
        return Err(invalid_config(format!("sweep {q} is still inside the warmup of {}", law.warmup)));
    }
    if let Some(&j) = prev.members.iter().find(|&&j| j >= pv.len()) {
        return Err(invalid_input(format!("active column {j} out of range")));
    }
    let card = law.next_cardinality(prev.len());
    let scores: Vec<f64> = prev.members.iter().map(|&j| pv[j]).collect();
    let mut members: Vec<usize> = top_k(&scores, card).into_iter().map(|p| prev.members[p]).collect();
    members.sort_unstable();
    Ok(ActiveSet { members, law })
}

/// How the pre-threshold column is formed.
pub(crate) enum ColumnRule<'g> {
    Ding { g: &'g AuxMatrix, g_rows: Option<Vec<Vec<(usize, f64)>>> },
    Variant,
    Sparse,
}

/// Working copy of `(S, u)` as per-column spike lists.
struct State {
    cols: Vec<Vec<(usize, f64)>>,
    u: Vec<f64>,
}

impl State {
    fn from_approx(a: &SparseUniformApprox) -> Self {
        let n = a.n();
        let mut cols = vec![Vec::new(); n];
        for (j, col) in a.spikes().columns() {
            cols[j] = col.iter().collect();
        }
        State { cols, u: a.background().to_vec() }
    }

    fn into_approx(self) -> SparseUniformApprox {
        let n = self.u.len();
        let s = SparseColMatrix::from_columns(n, &self.cols).expect("spikes are valid");
        SparseUniformApprox::new(s, self.u).expect("background is nonnegative")
    }

    fn rows(&self) -> Vec<Vec<(usize, f64)>> {
        let mut rows = vec![Vec::new(); self.u.len()];
        for (k, col) in self.cols.iter().enumerate() {
            for &(i, v) in col {
                rows[i].push((k, v));
            }
        }
        rows
    }

    fn mass(&self) -> f64 {
        let spikes: f64 = self.cols.iter().flatten().map(|e| e.1).sum();
        spikes + self.u.len() as f64 * self.u.iter().sum::<f64>()
    }

    fn pagerank_values(&self) -> Vec<f64> {
        self.cols
            .iter()
            .zip(&self.u)
            .map(|(c, u)| c.iter().map(|e| e.1).sum::<f64>() + u)
            .collect()
    }
}

fn lookup(row: &[(usize, f64)], k: usize) -> f64 {
    match row.binary_search_by_key(&k, |e| e.0) {
        Ok(p) => row[p].1,
        Err(_) => 0.0,
    }
}

/// Pre-threshold column `j` split into spikes and background.
fn update_column(
    problem: &HoprProblem<'_>,
    rule: &ColumnRule<'_>,
    beta: f64,
    j: usize,
    row: &[(usize, f64)],
    u: &[f64],
    u_sum: f64,
) -> ThresholdResult {
    let n = problem.n();
    let nf = n as f64;
    let alpha = problem.alpha();
    let q = problem.slices().slice(j);
    match rule {
        ColumnRule::Ding { g, g_rows } => {
            let mut z: Vec<f64> = match (g, g_rows) {
                (AuxMatrix::Teleport, _) => {
                    let g_jk = (1.0 - alpha) * problem.teleport()[j] / nf;
                    u.iter().map(|x| alpha * x + g_jk).collect()
                }
                (AuxMatrix::Sparse(_), Some(rows)) => {
                    let mut z: Vec<f64> = u.iter().map(|x| alpha * x).collect();
                    for &(k, v) in &rows[j] {
                        z[k] += (1.0 - alpha) * v;
                    }
                    z
                }
                (AuxMatrix::Sparse(_), None) => unreachable!("rows are built before the sweep"),
            };
            for &(k, v) in row {
                z[k] += alpha * v;
            }
            let d = q.dangling_deficit().expect("slices are substochastic");
            let floor = d.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() / nf;
            let qz = q.spmv_sparse(|k| z[k]);
            let entries: Vec<(usize, f64)> = qz.into_iter().map(|(i, v)| (i, v + floor)).collect();
            threshold_spiked_unchecked(n, floor, &entries, beta)
        }
        ColumnRule::Variant | ColumnRule::Sparse => {
            let y_mass = u_sum + row.iter().map(|e| e.1).sum::<f64>();
            let qy = q.spmv_sparse(|k| u[k] + lookup(row, k));
            let q_mass: f64 = qy.iter().map(|e| e.1).sum();
            let spread = alpha / nf * (y_mass - q_mass);
            let tele = match rule {
                ColumnRule::Variant => (1.0 - alpha) / nf,
                _ => (1.0 - alpha) * y_mass,
            };
            if problem.has_uniform_teleport() {
                let floor = spread + tele / nf;
                let entries: Vec<(usize, f64)> = qy.into_iter().map(|(i, v)| (i, alpha * v + floor)).collect();
                threshold_spiked_unchecked(n, floor, &entries, beta)
            } else {
                let mut b: Vec<f64> = problem.teleport().iter().map(|v| spread + tele * v).collect();
                for (i, v) in qy {
                    b[i] += alpha * v;
                }
                threshold_unchecked(&b, beta)
            }
        }
    }
}

/// `||(s_new - s_old) + (mu_new - mu_old) e||_1` for a column of length `n`.
fn column_change(old: &[(usize, f64)], old_mu: f64, new: &[(usize, f64)], new_mu: f64, n: usize) -> f64 {
    let dmu = new_mu - old_mu;
    let (mut p, mut q) = (0, 0);
    let mut total = 0.0;
    let mut touched = 0;
    while p < old.len() || q < new.len() {
        let ro = old.get(p).map_or(usize::MAX, |e| e.0);
        let rn = new.get(q).map_or(usize::MAX, |e| e.0);
        let diff = if ro == rn {
            p += 1;
            q += 1;
            new[q - 1].1 - old[p - 1].1
        } else if rn < ro {
            q += 1;
            new[q - 1].1
        } else {
            p += 1;
            -old[p - 1].1
        };
        total += (diff + dmu).abs();
        touched += 1;
    }
    total + (n - touched) as f64 * dmu.abs()
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta > 0.0 {
        Ok(())
    } else {
        Err(invalid_config(format!("beta must be positive, got {beta}")))
    }
}

/// Shared sweep loop for all truncated methods.
pub(crate) fn run_truncated(
    problem: &HoprProblem<'_>,
    rule: ColumnRule<'_>,
    beta: f64,
    partial: Option<PartialUpdate>,
    ctl: &IterControl,
    init: Option<&SparseUniformApprox>,
) -> Result<(SparseUniformApprox, IterationReport)> {
    ctl.validate()?;
    check_beta(beta)?;
    let n = problem.n();
    let rule = match rule {
        ColumnRule::Ding { g, .. } => {
            g.validate(n)?;
            let g_rows = match g {
                AuxMatrix::Sparse(m) => Some(m.to_rows()),
                AuxMatrix::Teleport => None,
            };
            ColumnRule::Ding { g, g_rows }
        }
        other => other,
    };
    let mut state = match init {
        Some(a) => {
            check_dim(n, a.n())?;
            State::from_approx(a)
        }
        None => State::from_approx(&SparseUniformApprox::uniform(n)),
    };
    let mut active = partial.map(|law| ActiveSet::full(n, law)).transpose()?;
    let all: Vec<usize> = (0..n).collect();

    let start = Instant::now();
    let mut report = IterationReport::default();
    for q in 0..ctl.max_iter {
        if let Some(set) = &active {
            if q >= set.law().warmup {
                let next = shrink_active_set(set, &state.pagerank_values(), q)?;
                assert!(next.is_subset_of(set), "active set grew");
                active = Some(next);
            }
        }
        let indices = active.as_ref().map_or(&all[..], |s| s.members());

        let rows = state.rows();
        let u_sum: f64 = state.u.iter().sum();
        let prev_mass = state.mass();
        let updates = ctl.exec.map_indices(indices, |j| {
            let r = update_column(problem, &rule, beta, j, &rows[j], &state.u, u_sum);
            let change = column_change(&state.cols[j], state.u[j], &r.spikes, r.mu, n);
            (r, change)
        });
        let mut change = 0.0;
        for (&j, (r, c)) in indices.iter().zip(updates) {
            state.cols[j] = r.spikes;
            state.u[j] = r.mu;
            change += c;
        }
        let res = change / prev_mass;
        report.iterations += 1;
        report.residual_history.push(res);
        report.active_columns_history.push(indices.len());
        if res <= ctl.tol {
            report.converged = true;
            break;
        }
    }
    report.wall_time = start.elapsed().as_secs_f64();
    let approx = state.into_approx();
    report.final_sparsity = Some(approx.sparsity());
    Ok((approx, report))
}

/// Truncated power method with an auxiliary matrix `G`.
///
/// The returned `(S, u)` is the thresholded part of the model; the
/// approximation of the stationary matrix is
/// `alpha (S + e u^T) + (1 - alpha) G`, see [`ding_approximation`].
pub fn tpm_ding(
    problem: &HoprProblem<'_>,
    g: &AuxMatrix,
    beta: f64,
    ctl: &IterControl,
    init: Option<&SparseUniformApprox>,
) -> Result<(SparseUniformApprox, IterationReport)> {
    run_truncated(problem, ColumnRule::Ding { g, g_rows: None }, beta, None, ctl, init)
}

/// `alpha (S + e u^T) + (1 - alpha) G` as a sparse-plus-uniform pair.
pub fn ding_approximation(
    problem: &HoprProblem<'_>,
    g: &AuxMatrix,
    approx: &SparseUniformApprox,
) -> Result<SparseUniformApprox> {
    let n = problem.n();
    check_dim(n, approx.n())?;
    let alpha = problem.alpha();
    match g {
        AuxMatrix::Sparse(m) => approx.blend(alpha, m),
        AuxMatrix::Teleport if problem.has_uniform_teleport() => {
            let (s, u) = approx.clone().into_parts();
            let t = s.triplets().map(|(i, k, v)| (i, k, alpha * v)).collect();
            let s = SparseColMatrix::from_triplets(n, n, t)?;
            let bg = (1.0 - alpha) / (n as f64 * n as f64);
            SparseUniformApprox::new(s, u.iter().map(|x| alpha * x + bg).collect())
        }
        AuxMatrix::Teleport => {
            let v = problem.teleport();
            let t = (0..n)
                .flat_map(|k| (0..n).map(move |i| (i, k)))
                .filter(|&(i, _)| v[i] > 0.0)
                .map(|(i, k)| (i, k, v[i] / n as f64))
                .collect();
            approx.blend(alpha, &SparseColMatrix::from_triplets(n, n, t)?)
        }
    }
}

/// Truncated power method without the auxiliary matrix: `G = (1/n) v e^T`
/// is folded into the update and the dangling vectors are eliminated. The
/// approximation is `S + e u^T`.
pub fn tpm_variant(
    problem: &HoprProblem<'_>,
    beta: f64,
    ctl: &IterControl,
    init: Option<&SparseUniformApprox>,
) -> Result<(SparseUniformApprox, IterationReport)> {
    run_truncated(problem, ColumnRule::Variant, beta, None, ctl, init)
}

/// [`tpm_variant`] with partial updating.
pub fn tpm_partial(
    problem: &HoprProblem<'_>,
    beta: f64,
    law: PartialUpdate,
    ctl: &IterControl,
    init: Option<&SparseUniformApprox>,
) -> Result<(SparseUniformApprox, IterationReport)> {
    run_truncated(problem, ColumnRule::Variant, beta, Some(law), ctl, init)
}

/// `alpha P(A) + (1 - alpha) G` with `G = (1/n) v e^T`, assembled densely.
pub fn variant_pre_threshold_dense(problem: &HoprProblem<'_>, a: &DenseMatrix, exec: Exec) -> Result<DenseMatrix> {
    let n = problem.n();
    check_dim(n, a.n_rows())?;
    check_dim(n, a.n_cols())?;
    let rows = a.transpose();
    let alpha = problem.alpha();
    let cols = exec.map_range(n, |j| {
        let row = rows.column(j);
        let qy = problem.slices().slice(j).spmv(row).expect("row length equals n");
        let spread = alpha / n as f64 * (row.iter().sum::<f64>() - qy.iter().sum::<f64>());
        qy.iter()
            .zip(problem.teleport().iter())
            .map(|(q, v)| alpha * q + spread + (1.0 - alpha) / n as f64 * v)
            .collect()
    });
    DenseMatrix::from_columns(n, cols)
}

/// The map iterated by [`tpm_variant`] on a dense matrix:
/// `T(alpha P(A) + (1 - alpha) G)`.
pub fn variant_map_dense(problem: &HoprProblem<'_>, a: &DenseMatrix, beta: f64, exec: Exec) -> Result<DenseMatrix> {
    threshold_matrix_dense(&variant_pre_threshold_dense(problem, a, exec)?, beta, exec)
}

/// The map iterated by [`tpm_ding`] on a dense matrix:
/// `alpha T(P(X)) + (1 - alpha) G`.
pub fn ding_map_dense(
    problem: &HoprProblem<'_>,
    g: &AuxMatrix,
    x: &DenseMatrix,
    beta: f64,
    exec: Exec,
) -> Result<DenseMatrix> {
    let n = problem.n();
    check_dim(n, x.n_rows())?;
    check_dim(n, x.n_cols())?;
    let rows = x.transpose();
    let y = exec.map_range(n, |j| {
        let row = rows.column(j);
        let q = problem.slices().slice(j);
        let d = q.dangling_deficit().expect("slices are substochastic");
        let spread = d.iter().zip(row).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        q.spmv(row).expect("row length equals n").iter().map(|v| v + spread).collect()
    });
    let t = threshold_matrix_dense(&DenseMatrix::from_columns(n, y)?, beta, exec)?;
    let gd = g.to_dense(problem);
    let alpha = problem.alpha();
    Ok(DenseMatrix::from_fn(n, n, |i, k| alpha * t.get(i, k) + (1.0 - alpha) * gd.get(i, k)))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::sparse::{SliceSet, StochVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random slices; each column keeps an entry with probability `density`.
    pub(crate) fn random_slices(seed: u64, n: usize, density: f64) -> SliceSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = Vec::new();
        for j in 0..n {
            for k in 0..n {
                let mut col = Vec::new();
                for i in 0..n {
                    if rng.gen::<f64>() < density {
                        col.push((i, rng.gen::<f64>() + 0.01));
                    }
                }
                let s: f64 = col.iter().map(|e: &(usize, f64)| e.1).sum();
                let target = if rng.gen_bool(0.7) { 1.0 } else { rng.gen::<f64>() };
                entries.extend(col.into_iter().map(|(i, v)| (i, j, k, v * target / s)));
            }
        }
        SliceSet::from_entries(n, entries).unwrap()
    }

    fn dense_fixed_point(f: impl Fn(&DenseMatrix) -> DenseMatrix, n: usize) -> DenseMatrix {
        let mut x = DenseMatrix::uniform(n);
        for _ in 0..10_000 {
            let next = f(&x);
            let change = next.l1_distance(&x);
            x = next;
            if change < 1e-15 {
                break;
            }
        }
        x
    }

    fn tight() -> IterControl {
        IterControl::new(1e-14, 2000)
    }

    #[test]
    fn single_state_variant() {
        let slices = SliceSet::all_dangling(1);
        let p = HoprProblem::uniform(&slices, 0.85).unwrap();
        let (a, rep) = tpm_variant(&p, 0.1, &tight(), None).unwrap();
        assert!(rep.converged);
        assert!((a.to_dense().get(0, 0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn single_state_ding() {
        let slices = SliceSet::from_entries(1, vec![(0, 0, 0, 1.0)]).unwrap();
        let p = HoprProblem::uniform(&slices, 0.85).unwrap();
        let (a, rep) = tpm_ding(&p, &AuxMatrix::Teleport, 0.1, &tight(), None).unwrap();
        assert!(rep.converged);
        let x = ding_approximation(&p, &AuxMatrix::Teleport, &a).unwrap();
        assert!((x.to_dense().get(0, 0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn variant_column_matches_explicit_dangling_form() {
        // alpha Q_j y + (alpha/n)(d_j^T y) e + (1 - alpha) G(:, j), d_j explicit
        let n = 5;
        let slices = random_slices(1, n, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 0.1).collect();
        let sum: f64 = v.iter().sum();
        let v = StochVector::new(v.iter().map(|x| x / sum).collect()).unwrap();
        let p = HoprProblem::new(&slices, v.clone(), 0.85).unwrap();
        let x = DenseMatrix::from_fn(n, n, |_, _| rng.gen::<f64>());
        let got = variant_pre_threshold_dense(&p, &x, Exec::Sequential).unwrap();
        for j in 0..n {
            let q = slices.slice(j).to_dense();
            let d: Vec<f64> = (0..n).map(|k| 1.0 - (0..n).map(|i| q.get(i, k)).sum::<f64>()).collect();
            let row = x.row(j);
            let dy: f64 = d.iter().zip(&row).map(|(a, b)| a * b).sum();
            for i in 0..n {
                let qy: f64 = (0..n).map(|k| q.get(i, k) * row[k]).sum();
                let want = 0.85 * qy + 0.85 / n as f64 * dy + 0.15 * v[i] / n as f64;
                assert!((got.get(i, j) - want).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn sparse_sweep_matches_dense_map() {
        // one sweep of the sparse engine equals one application of the dense map
        let n = 6;
        let slices = random_slices(3, n, 0.3);
        let p = HoprProblem::uniform(&slices, 0.85).unwrap();
        let beta = 1e-3;
        let ctl = IterControl::new(0.0, 3);
        let (a, _) = tpm_variant(&p, beta, &ctl, None).unwrap();
        let mut x = DenseMatrix::uniform(n);
        for _ in 0..3 {
            x = variant_map_dense(&p, &x, beta, Exec::Sequential).unwrap();
        }
        assert!(a.to_dense().l1_distance(&x) < 1e-13);

        let g = AuxMatrix::Teleport;
        let (a, _) = tpm_ding(&p, &g, beta, &ctl, None).unwrap();
        let mut x = DenseMatrix::uniform(n);
        for _ in 0..3 {
            x = ding_map_dense(&p, &g, &x, beta, Exec::Sequential).unwrap();
        }
        let got = ding_approximation(&p, &g, &a).unwrap().to_dense();
        assert!(got.l1_distance(&x) < 1e-13);
    }

    #[test]
    fn fixed_points_match_dense_iteration() {
        let n = 4;
        let beta = 1.0 / (n as f64).powi(4);
        let slices = random_slices(4, n, 0.4);
        let p = HoprProblem::uniform(&slices, 0.85).unwrap();
        let g = AuxMatrix::Teleport;

        let (a, rep) = tpm_variant(&p, beta, &tight(), None).unwrap();
        assert!(rep.converged);
        let want = dense_fixed_point(|x| variant_map_dense(&p, x, beta, Exec::Sequential).unwrap(), n);
        assert!(a.to_dense().l1_distance(&want) < 1e-6);

        let (b, rep) = tpm_ding(&p, &g, beta, &tight(), None).unwrap();
        assert!(rep.converged);
        let want = dense_fixed_point(|x| ding_map_dense(&p, &g, x, beta, Exec::Sequential).unwrap(), n);
        let got = ding_approximation(&p, &g, &b).unwrap().to_dense();
        assert!(got.l1_distance(&want) < 1e-6);
    }

    #[test]
    fn ding_iterates_keep_unit_mass() {
        let n = 12;
        let slices = random_slices(5, n, 0.2);
        let p = HoprProblem::uniform(&slices, 0.85).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t: Vec<(usize, usize, f64)> = (0..n)
            .flat_map(|k| (0..n).map(move |i| (i, k)))
            .filter(|_| rng.gen_bool(0.1))
            .map(|(i, k)| (i, k, 1.0 + (i * k % 3) as f64))
            .collect();
        let total: f64 = t.iter().map(|e| e.2).sum();
        let g = SparseColMatrix::from_triplets(n, n, t.into_iter().map(|(i, k, v)| (i, k, v / total)).collect()).unwrap();
        let g = AuxMatrix::Sparse(g);
        for iters in 1..6 {
            let (a, _) = tpm_ding(&p, &g, 1e-3, &IterControl::new(0.0, iters), None).unwrap();
            assert!((a.total_mass() - 1.0).abs() < 1e-10);
            let x = ding_approximation(&p, &g, &a).unwrap();
            assert!((x.total_mass() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_aux_and_beta() {
        let slices = random_slices(7, 3, 0.5);
        let p = HoprProblem::uniform(&slices, 0.85).unwrap();
        let g = AuxMatrix::Sparse(SparseColMatrix::from_triplets(3, 3, vec![(0, 0, 0.5)]).unwrap());
        assert!(tpm_ding(&p, &g, 0.1, &IterControl::default(), None).is_err());
        assert!(tpm_variant(&p, 0.0, &IterControl::default(), None).is_err());
    }

    #[test]
    fn non_convergence_is_flagged() {
        let slices = random_slices(8, 10, 0.3);
        let p = HoprProblem::uniform(&slices, 0.99).unwrap();
        let (_, rep) = tpm_variant(&p, 1e-6, &IterControl::new(1e-15, 2), None).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 2);
    }

    #[test]
    fn cardinality_law() {
        let law = PartialUpdate { varsigma: 10, tau: 0.1, warmup: 1 };
        assert_eq!(law.next_cardinality(100), 10);
        assert_eq!(law.next_cardinality(10), 10);
        assert_eq!(law.next_cardinality(1000), 100);
        let law = PartialUpdate { varsigma: 1, tau: 0.29, warmup: 1 };
        assert_eq!(law.next_cardinality(100), 29);
    }

    #[test]
    fn shrink_keeps_argmax() {
        let law = PartialUpdate { varsigma: 2, tau: 0.5, warmup: 1 };
        let set = ActiveSet::full(4, law).unwrap();
        let next = shrink_active_set(&set, &[0.1, 0.4, 0.05, 0.3], 1).unwrap();
        assert_eq!(next.members(), &[1, 3]);
        let tied = shrink_active_set(&set, &[0.2; 4], 1).unwrap();
        assert_eq!(tied.members(), &[0, 1]);
    }

    #[test]
    fn shrink_preconditions() {
        let law = PartialUpdate { varsigma: 5, tau: 0.1, warmup: 2 };
        assert!(ActiveSet::full(4, law).is_err());
        let set = ActiveSet::full(10, law).unwrap();
        assert!(shrink_active_set(&set, &[0.0; 10], 1).is_err());
        assert!(shrink_active_set(&set, &[0.0; 10], 2).is_ok());
    }

    #[test]
    fn partial_counts_and_frozen_columns() {
        let n = 200;
        let slices = random_slices(9, n, 0.01);
        let p = HoprProblem::uniform(&slices, 0.85).unwrap();
        let law = PartialUpdate { varsigma: 3, tau: 0.1, warmup: 2 };
        let (_, rep) = tpm_partial(&p, 1e-6, law, &IterControl::new(0.0, 6), None).unwrap();
        assert_eq!(rep.active_columns_history, vec![200, 200, 20, 3, 3, 3]);

        // a sweep restricted to the active set leaves every other column as it was
        let (before, _) = tpm_partial(&p, 1e-6, law, &IterControl::new(0.0, 3), None).unwrap();
        let (after, _) = tpm_partial(&p, 1e-6, law, &IterControl::new(0.0, 4), None).unwrap();
        let changed = (0..n)
            .filter(|&j| {
                before.spikes().column(j).values != after.spikes().column(j).values
                    || before.background()[j].to_bits() != after.background()[j].to_bits()
            })
            .count();
        assert!(changed <= 3);
    }

    #[test]
    fn full_tau_equals_variant() {
        let n = 50;
        let slices = random_slices(10, n, 0.05);
        let p = HoprProblem::uniform(&slices, 0.85).unwrap();
        let law = PartialUpdate { varsigma: 10, tau: 1.0, warmup: 1 };
        let ctl = IterControl::new(1e-10, 200);
        let (a, ra) = tpm_variant(&p, 1e-5, &ctl, None).unwrap();
        let (b, rb) = tpm_partial(&p, 1e-5, law, &ctl, None).unwrap();
        assert_eq!(ra.residual_history, rb.residual_history);
        assert_eq!(a, b);
    }

    #[test]
    fn parallel_matches_sequential() {
        let n = 60;
        let slices = random_slices(11, n, 0.05);
        let p = HoprProblem::uniform(&slices, 0.85).unwrap();
        let seq = IterControl::new(1e-10, 100).with_exec(Exec::Sequential);
        let par = seq.with_exec(Exec::Parallel);
        assert_eq!(tpm_variant(&p, 1e-5, &seq, None).unwrap().0, tpm_variant(&p, 1e-5, &par, None).unwrap().0);
        let g = AuxMatrix::Teleport;
        assert_eq!(tpm_ding(&p, &g, 1e-5, &seq, None).unwrap().0, tpm_ding(&p, &g, 1e-5, &par, None).unwrap().0);
    }

    #[test]
    fn nonuniform_teleport_uses_dense_path() {
        let n = 8;
        let slices = random_slices(12, n, 0.3);
        let v = StochVector::new((1..=n).map(|i| i as f64 / 36.0).collect()).unwrap();
        let p = HoprProblem::new(&slices, v, 0.85).unwrap();
        let (a, _) = tpm_variant(&p, 1e-3, &IterControl::new(0.0, 4), None).unwrap();
        let mut x = DenseMatrix::uniform(n);
        for _ in 0..4 {
            x = variant_map_dense(&p, &x, 1e-3, Exec::Sequential).unwrap();
        }
        assert!(a.to_dense().l1_distance(&x) < 1e-13);
    }
}
