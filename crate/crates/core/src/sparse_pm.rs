//! Sparse power method on the original model and the contraction-ratio
//! experiment for the thresholding operator.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::approx::SparseUniformApprox;
use crate::error::{check_dim, invalid_config, invalid_input, Result};
use crate::exec::Exec;
use crate::operators::{apply_w, HoprProblem, IterControl, IterationReport};
use crate::sparse::DenseMatrix;
use crate::threshold::{threshold_matrix_dense, threshold_unchecked};
use crate::truncated::{run_truncated, ColumnRule, PartialUpdate};

/// Sparse power method: `X <- T(W(X))` on `S + e u^T`, where `W` is the
/// exact operator. Column `j` uses `y = S(j, :)^T + u` and
/// `alpha Q_j y + (alpha/n)(||y|| - ||Q_j y||) e + (1 - alpha) ||y|| v`.
pub fn spm(
    problem: &HoprProblem<'_>,
    beta: f64,
    ctl: &IterControl,
    init: Option<&SparseUniformApprox>,
) -> Result<(SparseUniformApprox, IterationReport)> {
    run_truncated(problem, ColumnRule::Sparse, beta, None, ctl, init)
}

/// [`spm`] with partial updating.
pub fn spm_partial(
    problem: &HoprProblem<'_>,
    beta: f64,
    law: PartialUpdate,
    ctl: &IterControl,
    init: Option<&SparseUniformApprox>,
) -> Result<(SparseUniformApprox, IterationReport)> {
    run_truncated(problem, ColumnRule::Sparse, beta, Some(law), ctl, init)
}

/// The map iterated by [`spm`] on a dense matrix: `T(W(A))`.
pub fn spm_map_dense(problem: &HoprProblem<'_>, a: &DenseMatrix, beta: f64, exec: Exec) -> Result<DenseMatrix> {
    threshold_matrix_dense(&apply_w(problem, a, exec)?, beta, exec)
}

/// Distribution of the random matrices in [`rho_experiment`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RhoScaling {
    /// I.i.d. uniform entries rescaled so each matrix has total mass 1.
    #[default]
    UnitMass,
    /// Raw i.i.d. uniform `[0, 1)` entries.
    Raw,
}

/// `||T(A) - T(B)||_l1 / ||A - B||_l1`, evaluated column by column.
pub fn rho(a: &DenseMatrix, b: &DenseMatrix, beta: f64) -> Result<f64> {
    check_dim(a.n_rows(), b.n_rows())?;
    check_dim(a.n_cols(), b.n_cols())?;
    if !(beta.is_finite() && beta > 0.0) {
        return Err(invalid_config(format!("beta must be positive, got {beta}")));
    }
    if !a.is_nonnegative() || !b.is_nonnegative() {
        return Err(invalid_input("matrices must be nonnegative"));
    }
    let den = a.l1_distance(b);
    if den == 0.0 {
        return Err(invalid_input("ratio undefined for identical matrices"));
    }
    Ok(rho_unchecked(a, b, beta, den))
}

fn rho_unchecked(a: &DenseMatrix, b: &DenseMatrix, beta: f64, den: f64) -> f64 {
    let n = a.n_rows();
    let num: f64 = (0..a.n_cols())
        .map(|j| {
            let ta = threshold_unchecked(a.column(j), beta).reconstruct(n);
            let tb = threshold_unchecked(b.column(j), beta).reconstruct(n);
            ta.iter().zip(&tb).map(|(x, y)| (x - y).abs()).sum::<f64>()
        })
        .sum();
    num / den
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, scaling: RhoScaling) -> DenseMatrix {
    let m = DenseMatrix::from_fn(n, n, |_, _| rng.gen::<f64>());
    match scaling {
        RhoScaling::Raw => m,
        RhoScaling::UnitMass => {
            let total = m.l1_norm();
            DenseMatrix::from_fn(n, n, |i, k| m.get(i, k) / total)
        }
    }
}

/// Draws `trials` pairs of random `n x n` nonnegative matrices and returns
/// the ratio [`rho`] for each. Trial `t` uses its own ChaCha stream of
/// `seed`, so results do not depend on the execution strategy.
pub fn rho_experiment(
    n: usize,
    trials: usize,
    beta: f64,
    seed: u64,
    scaling: RhoScaling,
    exec: Exec,
) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(invalid_config(format!("n must be at least 2, got {n}")));
    }
    if trials == 0 {
        return Err(invalid_config("trials must be at least 1"));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(invalid_config(format!("beta must be positive, got {beta}")));
    }
    Ok(exec.map_range(trials, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t as u64);
        loop {
            let a = random_matrix(&mut rng, n, scaling);
            let b = random_matrix(&mut rng, n, scaling);
            let den = a.l1_distance(&b);
            if den > 0.0 {
                return rho_unchecked(&a, &b, beta, den);
            }
        }
    }))
}

/// Two-column text table `trial rho`, one line per trial, 1-based.
pub fn rho_table(rhos: &[f64]) -> String {
    let mut out = String::from("trial rho\n");
    for (t, r) in rhos.iter().enumerate() {
        let _ = writeln!(out, "{} {}", t + 1, r);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::power_method;
    use crate::sparse::SliceSet;
    use crate::truncated::tests::random_slices;

    #[test]
    fn single_state() {
        let slices = SliceSet::all_dangling(1);
        let p = HoprProblem::uniform(&slices, 0.85).unwrap();
        let (a, rep) = spm(&p, 0.1, &IterControl::new(1e-14, 100), None).unwrap();
        assert!(rep.converged);
        assert!((a.to_dense().get(0, 0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn matches_power_method() {
        // at n = 4 a penalty of 1/n^4 is comparable to the entries, so the
        // power-method comparison uses a penalty far below them
        let n = 4;
        let slices = random_slices(21, n, 0.4);
        let p = HoprProblem::uniform(&slices, 0.85).unwrap();
        let (x, _) = power_method(&p, None, &IterControl::new(1e-12, 1000)).unwrap();
        let (a, rep) = spm(&p, 1e-12, &IterControl::new(1e-14, 2000), None).unwrap();
        assert!(rep.converged);
        assert!(a.relative_error_dense(&x).unwrap() < 1e-6);
    }

    #[test]
    fn error_shrinks_with_beta() {
        let n = 4;
        let slices = random_slices(21, n, 0.4);
        let p = HoprProblem::uniform(&slices, 0.85).unwrap();
        let (x, _) = power_method(&p, None, &IterControl::new(1e-13, 1000)).unwrap();
        let errs: Vec<f64> = [1e-2, 1e-3, 1e-4, 1e-6]
            .iter()
            .map(|&b| spm(&p, b, &IterControl::new(1e-14, 2000), None).unwrap().0.relative_error_dense(&x).unwrap())
            .collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
    }

    #[test]
    fn sweep_matches_dense_map() {
        let n = 7;
        let slices = random_slices(22, n, 0.3);
        let p = HoprProblem::uniform(&slices, 0.85).unwrap();
        let (a, _) = spm(&p, 1e-3, &IterControl::new(0.0, 3), None).unwrap();
        let mut x = DenseMatrix::uniform(n);
        for _ in 0..3 {
            x = spm_map_dense(&p, &x, 1e-3, Exec::Sequential).unwrap();
        }
        assert!(a.to_dense().l1_distance(&x) < 1e-13);
    }

    #[test]
    fn pre_threshold_column_keeps_row_mass() {
        let n = 9;
        let slices = random_slices(23, n, 0.3);
        let p = HoprProblem::uniform(&slices, 0.85).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DenseMatrix::from_fn(n, n, |_, _| rng.gen::<f64>());
        let w = apply_w(&p, &x, Exec::Sequential).unwrap();
        for j in 0..n {
            let col: f64 = w.column(j).iter().sum();
            let row: f64 = x.row(j).iter().sum();
            assert!((col - row).abs() <= 1e-12);
        }
    }

    #[test]
    fn huge_beta_gives_background_only() {
        let n = 20;
        let slices = random_slices(24, n, 0.2);
        let p = HoprProblem::uniform(&slices, 0.85).unwrap();
        let (a, _) = spm(&p, 10.0, &IterControl::new(1e-12, 50), None).unwrap();
        assert_eq!(a.spikes().nnz(), 0);
        assert!(a.background().iter().all(|u| u.is_finite() && *u >= 0.0));
        assert!((a.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn changes_mostly_shrink() {
        for seed in 0..5 {
            let n = 40;
            let slices = random_slices(30 + seed, n, 0.05);
            let p = HoprProblem::uniform(&slices, 0.85).unwrap();
            let (_, rep) = spm(&p, 1.0 / (n * n * n) as f64, &IterControl::new(1e-13, 300), None).unwrap();
            let h = &rep.residual_history;
            let ok = h.windows(2).filter(|w| w[1] <= w[0]).count();
            assert!(ok as f64 >= 0.95 * (h.len() - 1) as f64, "{h:?}");
        }
    }

    #[test]
    fn full_tau_equals_spm() {
        let n = 50;
        let slices = random_slices(25, n, 0.05);
        let p = HoprProblem::uniform(&slices, 0.85).unwrap();
        let law = PartialUpdate { varsigma: 10, tau: 1.0, warmup: 1 };
        let ctl = IterControl::new(1e-10, 200);
        let (a, _) = spm(&p, 1e-5, &ctl, None).unwrap();
        let (b, _) = spm_partial(&p, 1e-5, law, &ctl, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rho_bounded_and_reproducible() {
        let r = rho_experiment(20, 50, 1.0 / 400.0, 7, RhoScaling::UnitMass, Exec::Parallel).unwrap();
        assert_eq!(r.len(), 50);
        assert!(r.iter().all(|x| x.is_finite() && *x <= 1.0 + 1e-12));
        let again = rho_experiment(20, 50, 1.0 / 400.0, 7, RhoScaling::UnitMass, Exec::Sequential).unwrap();
        assert_eq!(r, again);
        let raw = rho_experiment(20, 5, 1.0 / 400.0, 7, RhoScaling::Raw, Exec::Sequential).unwrap();
        assert!(raw.iter().all(|x| *x <= 1.0 + 1e-12));
    }

    #[test]
    fn rho_of_uniform_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = DenseMatrix::from_fn(10, 10, |_, _| rng.gen::<f64>());
        let a = DenseMatrix::from_fn(10, 10, |i, k| b.get(i, k) + 0.3);
        let r = rho(&a, &b, 0.01).unwrap();
        assert!(r.is_finite() && r <= 1.0 + 1e-12);
        assert!(rho(&a, &a, 0.01).is_err());
    }

    #[test]
    fn rho_rejects_bad_config() {
        assert!(rho_experiment(1, 5, 0.1, 0, RhoScaling::Raw, Exec::Sequential).is_err());
        assert!(rho_experiment(5, 0, 0.1, 0, RhoScaling::Raw, Exec::Sequential).is_err());
    }

    #[test]
    fn table_format() {
        assert_eq!(rho_table(&[0.5, 0.25]), "trial rho\n1 0.5\n2 0.25\n");
    }
}
