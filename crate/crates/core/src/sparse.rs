//! Sparse column storage, slice sets and the dangling-deficit arithmetic.
//!
//! [`SparseColMatrix`] is doubly compressed: only non-empty columns carry a
//! pointer entry, so a slice of an `n`-state chain with a handful of links
//! costs memory proportional to its links, not to `n`. This matters because
//! a [`SliceSet`] holds `n` such slices.

use crate::error::{check_dim, invalid_input, HoprError, Result};

/// Slack accepted on a column l1 sum before a slice is rejected as
/// super-stochastic.
pub const COLSUM_TOL: f64 = 1e-12;

/// Column-compressed nonnegative sparse matrix that stores only non-empty
/// columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseColMatrix {
    n_rows: usize,
    n_cols: usize,
    /// Sorted ids of the non-empty columns.
    col_ids: Vec<usize>,
    /// `col_ptr[c]..col_ptr[c + 1]` spans the entries of column `col_ids[c]`.
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Borrowed view of one column: parallel row-index and value slices.
#[derive(Clone, Copy, Debug)]
pub struct ColumnView<'a> {
    pub rows: &'a [usize],
    pub values: &'a [f64],
}

impl<'a> ColumnView<'a> {
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + 'a {
        self.rows.iter().copied().zip(self.values.iter().copied())
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

fn check_value(v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid_input(format!("entry {v} is not a finite nonnegative number")))
    }
}

impl SparseColMatrix {
    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        SparseColMatrix {
            n_rows,
            n_cols,
            col_ids: Vec::new(),
            col_ptr: vec![0],
            row_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseColMatrix {
            n_rows: n,
            n_cols: n,
            col_ids: (0..n).collect(),
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets in any order.
    ///
    /// Zeros are dropped; duplicated positions, out-of-range indices and
    /// negative or non-finite values are rejected.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        for &(i, k, v) in &triplets {
            if i >= n_rows || k >= n_cols {
                return Err(invalid_input(format!(
                    "entry ({i}, {k}) outside a {n_rows}x{n_cols} matrix"
                )));
            }
            check_value(v)?;
        }
        triplets.retain(|t| t.2 != 0.0);
        triplets.sort_unstable_by_key(|&(i, k, _)| (k, i));
        if let Some(w) = triplets.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(invalid_input(format!("duplicate entry at ({}, {})", w[0].0, w[0].1)));
        }

        let mut m = SparseColMatrix::empty(n_rows, n_cols);
        m.row_idx.reserve(triplets.len());
        m.values.reserve(triplets.len());
        for (i, k, v) in triplets {
            if m.col_ids.last() != Some(&k) {
                if !m.col_ids.is_empty() {
                    m.col_ptr.push(m.row_idx.len());
                }
                m.col_ids.push(k);
            }
            m.row_idx.push(i);
            m.values.push(v);
        }
        if !m.col_ids.is_empty() {
            m.col_ptr.push(m.row_idx.len());
        }
        Ok(m)
    }

    /// Builds a matrix from one entry list per column (`columns.len()` must
    /// equal `n_cols`). Rows inside a column must be strictly increasing.
    pub fn from_columns(n_rows: usize, columns: &[Vec<(usize, f64)>]) -> Result<Self> {
        let mut m = SparseColMatrix::empty(n_rows, columns.len());
        for (k, col) in columns.iter().enumerate() {
            let mut prev: Option<usize> = None;
            let start = m.row_idx.len();
            for &(i, v) in col {
                if i >= n_rows {
                    return Err(invalid_input(format!("row {i} outside {n_rows} rows")));
                }
                if prev.is_some_and(|p| p >= i) {
                    return Err(invalid_input(format!("rows of column {k} not strictly increasing")));
                }
                check_value(v)?;
                prev = Some(i);
                if v != 0.0 {
                    m.row_idx.push(i);
                    m.values.push(v);
                }
            }
            if m.row_idx.len() > start {
                m.col_ids.push(k);
                m.col_ptr.push(m.row_idx.len());
            }
        }
        Ok(m)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Ids of the columns holding at least one entry, ascending.
    pub fn nonempty_columns(&self) -> &[usize] {
        &self.col_ids
    }

    pub fn column(&self, k: usize) -> ColumnView<'_> {
        match self.col_ids.binary_search(&k) {
            Ok(c) => self.column_at(c),
            Err(_) => ColumnView { rows: &[], values: &[] },
        }
    }

    fn column_at(&self, c: usize) -> ColumnView<'_> {
        let span = self.col_ptr[c]..self.col_ptr[c + 1];
        ColumnView {
            rows: &self.row_idx[span.clone()],
            values: &self.values[span],
        }
    }

    /// Non-empty columns in ascending order.
    pub fn columns(&self) -> impl Iterator<Item = (usize, ColumnView<'_>)> + '_ {
        self.col_ids.iter().enumerate().map(|(c, &k)| (k, self.column_at(c)))
    }

    /// All stored entries as `(row, col, value)`, column-major.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.columns().flat_map(|(k, col)| col.iter().map(move |(i, v)| (i, k, v)))
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        let col = self.column(k);
        match col.rows.binary_search(&i) {
            Ok(p) => col.values[p],
            Err(_) => 0.0,
        }
    }

    /// `Q x` for a dense vector `x`.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n_cols, x.len())?;
        let mut y = vec![0.0; self.n_rows];
        for (k, col) in self.columns() {
            let xk = x[k];
            if xk != 0.0 {
                for (i, v) in col.iter() {
                    y[i] += v * xk;
                }
            }
        }
        Ok(y)
    }

    /// `Q x` returned as sorted `(row, value)` pairs, touching only the
    /// non-empty columns. `x` is looked up lazily, so it may be sparse+dense.
    pub(crate) fn spmv_sparse(&self, x: impl Fn(usize) -> f64) -> Vec<(usize, f64)> {
        let mut acc: Vec<(usize, f64)> = Vec::new();
        for (k, col) in self.columns() {
            let xk = x(k);
            if xk != 0.0 {
                acc.extend(col.iter().map(|(i, v)| (i, v * xk)));
            }
        }
        merge_duplicates(acc)
    }

    /// Entry `k` is `sum_i Q(i, k)`.
    pub fn column_l1_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_cols];
        for (k, col) in self.columns() {
            sums[k] = col.sum();
        }
        sums
    }

    /// Per-column deficit `d(k) = 1 - sum_i Q(i, k)`, so that
    /// `Q + (1/n) e d^T` is column stochastic. Sums in `(1, 1 + COLSUM_TOL]`
    /// are clamped to a zero deficit.
    pub fn dangling_deficit(&self) -> Result<Vec<f64>> {
        self.column_l1_sums()
            .into_iter()
            .enumerate()
            .map(|(k, s)| {
                if s > 1.0 + COLSUM_TOL {
                    Err(invalid_input(format!("column {k} sums to {s} > 1")))
                } else {
                    Ok((1.0 - s).max(0.0))
                }
            })
            .collect()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for (i, k, v) in self.triplets() {
            d.set(i, k, v);
        }
        d
    }

    /// Row lists of the matrix: `rows[i]` holds `(col, value)` sorted by col.
    pub fn to_rows(&self) -> Vec<Vec<(usize, f64)>> {
        let mut rows = vec![Vec::new(); self.n_rows];
        for (i, k, v) in self.triplets() {
            rows[i].push((k, v));
        }
        rows
    }
}

/// Sorts `(index, value)` pairs and sums values sharing an index; zero sums
/// are dropped.
pub(crate) fn merge_duplicates(mut acc: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    acc.sort_unstable_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(acc.len());
    for (i, v) in acc {
        match out.last_mut() {
            Some(last) if last.0 == i => last.1 += v,
            _ => out.push((i, v)),
        }
    }
    out.retain(|e| e.1 != 0.0);
    out
}

/// The `n` slice matrices `Q_1 .. Q_n` of a second-order transition tensor,
/// `Q_j(i, k)` being the probability of moving to `i` from current state `j`
/// and previous state `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceSet {
    n: usize,
    slices: Vec<SparseColMatrix>,
}

impl SliceSet {
    /// Validates shapes and column substochasticity.
    pub fn new(n: usize, slices: Vec<SparseColMatrix>) -> Result<Self> {
        check_dim(n, slices.len())?;
        for (j, q) in slices.iter().enumerate() {
            if q.n_rows() != n || q.n_cols() != n {
                return Err(invalid_input(format!(
                    "slice {j} is {}x{}, expected {n}x{n}",
                    q.n_rows(),
                    q.n_cols()
                )));
            }
            for (k, col) in q.columns() {
                let s = col.sum();
                if s > 1.0 + COLSUM_TOL {
                    return Err(invalid_input(format!("slice {j} column {k} sums to {s} > 1")));
                }
            }
        }
        Ok(SliceSet { n, slices })
    }

    /// Builds from `(i, j, k, v)` entries meaning `Q_j(i, k) = v` (0-based).
    pub fn from_entries(n: usize, entries: Vec<(usize, usize, usize, f64)>) -> Result<Self> {
        let mut per_slice: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); n];
        for (i, j, k, v) in entries {
            if j >= n {
                return Err(invalid_input(format!("slice index {j} outside {n} states")));
            }
            per_slice[j].push((i, k, v));
        }
        let slices = per_slice
            .into_iter()
            .map(|t| SparseColMatrix::from_triplets(n, n, t))
            .collect::<Result<Vec<_>>>()?;
        SliceSet::new(n, slices)
    }

    /// Every slice is the all-zero matrix: each state pair is dangling.
    pub fn all_dangling(n: usize) -> Self {
        SliceSet {
            n,
            slices: vec![SparseColMatrix::empty(n, n); n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn slice(&self, j: usize) -> &SparseColMatrix {
        &self.slices[j]
    }

    pub fn slices(&self) -> &[SparseColMatrix] {
        &self.slices
    }

    pub fn nnz(&self) -> usize {
        self.slices.iter().map(SparseColMatrix::nnz).sum()
    }

    /// All entries as `(i, j, k, v)` with `Q_j(i, k) = v`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        self.slices
            .iter()
            .enumerate()
            .flat_map(|(j, q)| q.triplets().map(move |(i, k, v)| (i, j, k, v)))
    }
}

/// Dense column-major matrix. Used for the reference power method and for
/// small-size oracles.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        DenseMatrix { n_rows, n_cols, data: vec![0.0; n_rows * n_cols] }
    }

    pub fn from_fn(n_rows: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for k in 0..n_cols {
            for i in 0..n_rows {
                data.push(f(i, k));
            }
        }
        DenseMatrix { n_rows, n_cols, data }
    }

    /// Assembles a matrix from its columns.
    pub fn from_columns(n_rows: usize, columns: Vec<Vec<f64>>) -> Result<Self> {
        let n_cols = columns.len();
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for col in columns {
            check_dim(n_rows, col.len())?;
            data.extend(col);
        }
        Ok(DenseMatrix { n_rows, n_cols, data })
    }

    /// `x x^T`, the rank-one lift of a vector.
    pub fn outer(x: &[f64]) -> Self {
        DenseMatrix::from_fn(x.len(), x.len(), |i, k| x[i] * x[k])
    }

    /// `(1/n^2) e e^T`, the uniform distribution over state pairs.
    pub fn uniform(n: usize) -> Self {
        let w = 1.0 / (n as f64 * n as f64);
        DenseMatrix { n_rows: n, n_cols: n, data: vec![w; n * n] }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[k * self.n_rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, k: usize, v: f64) {
        self.data[k * self.n_rows + i] = v;
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.data[k * self.n_rows..(k + 1) * self.n_rows]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.n_cols).map(|k| self.get(i, k)).collect()
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n_cols, self.n_rows, |i, k| self.get(k, i))
    }

    /// Sum of absolute values of all entries.
    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn l1_distance(&self, other: &DenseMatrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).sum()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|v| v.is_finite() && *v >= 0.0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n_cols, x.len())?;
        let mut y = vec![0.0; self.n_rows];
        for (k, &xk) in x.iter().enumerate() {
            for (yi, a) in y.iter_mut().zip(self.column(k)) {
                *yi += a * xk;
            }
        }
        Ok(y)
    }
}

/// Tolerance on the unit sum of a probability vector.
pub const STOCH_TOL: f64 = 1e-12;

/// A nonnegative vector summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct StochVector(Vec<f64>);

impl StochVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid_input("empty probability vector"));
        }
        for &v in &values {
            check_value(v)?;
        }
        let s: f64 = values.iter().sum();
        if (s - 1.0).abs() > STOCH_TOL {
            return Err(HoprError::InvalidInput(format!("probability vector sums to {s}")));
        }
        Ok(StochVector(values))
    }

    pub fn uniform(n: usize) -> Self {
        StochVector(vec![1.0 / n as f64; n])
    }

    /// Skips validation; for iterates that are stochastic by construction.
    pub(crate) fn new_unchecked(values: Vec<f64>) -> Self {
        StochVector(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// All entries bitwise equal.
    pub fn is_uniform(&self) -> bool {
        self.0.windows(2).all(|w| w[0] == w[1])
    }
}

impl std::ops::Deref for StochVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}
