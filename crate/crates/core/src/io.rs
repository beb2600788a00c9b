//! Text file formats, link-tensor ingestion and synthetic instances.
//!
//! All formats start with a magic line `%%HOPR-<KIND> <version>` followed by
//! a size line. Indices in files are 1-based. Blank lines and lines starting
//! with `%` after the magic line are ignored. The declared entry count is
//! checked against the number of entry lines, which catches truncated
//! files.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::approx::SparseUniformApprox;
use crate::error::{invalid_config, HoprError, Result};
use crate::exec::Exec;
use crate::sparse::{SliceSet, SparseColMatrix};

pub const FORMAT_VERSION: u32 = 1;
const SLICES_MAGIC: &str = "%%HOPR-SLICES";
const TRIPLES_MAGIC: &str = "%%HOPR-TRIPLES";
const RESULT_MAGIC: &str = "%%HOPR-RESULT";

/// Link `i -> j` through anchor term `s` (0-based).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkTriple {
    pub i: usize,
    pub j: usize,
    pub s: usize,
}

/// A binary link tensor over `n` pages and `m` anchor terms.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LinkTensor {
    pub n: usize,
    pub m: usize,
    pub triples: BTreeSet<LinkTriple>,
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> Lines<R> {
    fn new(reader: R) -> Self {
        Lines { inner: reader.lines(), line_no: 0 }
    }

    fn raw(&mut self) -> Result<Option<String>> {
        match self.inner.next() {
            Some(l) => {
                self.line_no += 1;
                Ok(Some(l?))
            }
            None => Ok(None),
        }
    }

    /// Next line that is neither blank nor a comment.
    fn next_data(&mut self) -> Result<Option<String>> {
        while let Some(l) = self.raw()? {
            let t = l.trim();
            if !t.is_empty() && !t.starts_with('%') {
                return Ok(Some(t.to_string()));
            }
        }
        Ok(None)
    }

    fn err(&self, msg: impl Into<String>) -> HoprError {
        HoprError::Parse { line: self.line_no, msg: msg.into() }
    }

    fn magic(&mut self, magic: &str) -> Result<()> {
        let line = self.raw()?.ok_or_else(|| HoprError::Format("empty file".into()))?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(magic) {
            return Err(HoprError::Format(format!("expected magic line {magic}, found {line:?}")));
        }
        match parts.next().map(str::parse::<u32>) {
            Some(Ok(FORMAT_VERSION)) => Ok(()),
            Some(Ok(v)) => Err(HoprError::Format(format!("unsupported {magic} version {v}"))),
            _ => Err(HoprError::Format(format!("missing version after {magic}"))),
        }
    }

    /// Parses the next data line as exactly `N` whitespace-separated fields.
    fn fields<const N: usize>(&mut self, what: &str) -> Result<Option<[String; N]>> {
        let Some(line) = self.next_data()? else { return Ok(None) };
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != N {
            return Err(self.err(format!("expected {N} fields for {what}, found {}", parts.len())));
        }
        Ok(Some(std::array::from_fn(|p| parts[p].to_string())))
    }

    fn require<const N: usize>(&mut self, what: &str) -> Result<[String; N]> {
        self.fields::<N>(what)?
            .ok_or_else(|| self.err(format!("unexpected end of file, expected {what}")))
    }

    fn usize(&self, s: &str) -> Result<usize> {
        s.parse().map_err(|_| self.err(format!("{s:?} is not a nonnegative integer")))
    }

    /// 1-based index in `1..=max`, returned 0-based.
    fn index(&self, s: &str, max: usize) -> Result<usize> {
        let v = self.usize(s)?;
        if v == 0 || v > max {
            return Err(self.err(format!("index {v} outside 1..={max}")));
        }
        Ok(v - 1)
    }

    fn value(&self, s: &str) -> Result<f64> {
        let v: f64 = s.parse().map_err(|_| self.err(format!("{s:?} is not a number")))?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(self.err(format!("value {v} is not nonnegative")));
        }
        Ok(v)
    }

    fn end(&mut self, declared: usize) -> Result<()> {
        if self.next_data()?.is_some() {
            return Err(self.err(format!("more entries than the declared {declared}")));
        }
        Ok(())
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn read_triples(reader: impl BufRead) -> Result<LinkTensor> {
    let mut lines = Lines::new(reader);
    lines.magic(TRIPLES_MAGIC)?;
    let [n, m, nnz] = lines.require::<3>("header \"n m nnz\"")?;
    let (n, m, nnz) = (lines.usize(&n)?, lines.usize(&m)?, lines.usize(&nnz)?);
    let mut triples = BTreeSet::new();
    for _ in 0..nnz {
        let [i, j, s] = lines.require::<3>("triple \"i j s\"")?;
        triples.insert(LinkTriple {
            i: lines.index(&i, n)?,
            j: lines.index(&j, n)?,
            s: lines.index(&s, m)?,
        });
    }
    lines.end(nnz)?;
    Ok(LinkTensor { n, m, triples })
}

pub fn load_triples(path: impl AsRef<Path>) -> Result<LinkTensor> {
    read_triples(open(path.as_ref())?)
}

pub fn write_triples(mut w: impl Write, tensor: &LinkTensor) -> Result<()> {
    writeln!(w, "{TRIPLES_MAGIC} {FORMAT_VERSION}")?;
    writeln!(w, "{} {} {}", tensor.n, tensor.m, tensor.triples.len())?;
    for t in &tensor.triples {
        writeln!(w, "{} {} {}", t.i + 1, t.j + 1, t.s + 1)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_triples(path: impl AsRef<Path>, tensor: &LinkTensor) -> Result<()> {
    write_triples(create(path.as_ref())?, tensor)
}

/// Slices `Q_j = U_j W_j` of a link tensor, with
/// `U_j(i, s) = A(j, i, s) / sum_i A(j, i, s)` and
/// `W_j(s, k) = A(k, j, s) / sum_s A(k, j, s)` (zero where the sum is zero).
pub fn build_slice_set(tensor: &LinkTensor, exec: Exec) -> Result<SliceSet> {
    let n = tensor.n;
    if let Some(t) = tensor.triples.iter().find(|t| t.i >= n || t.j >= n || t.s >= tensor.m) {
        return Err(HoprError::InvalidInput(format!("triple {t:?} out of range")));
    }
    // out_links[j][s]: targets of page j through term s
    let mut out_links: Vec<BTreeMap<usize, Vec<usize>>> = vec![BTreeMap::new(); n];
    // in_links[j]: (source k, term s) of links into j
    let mut in_links: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    // anchors[(k, j)]: number of terms on the link k -> j
    let mut anchors: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for t in &tensor.triples {
        out_links[t.i].entry(t.s).or_default().push(t.j);
        in_links[t.j].push((t.i, t.s));
        *anchors.entry((t.i, t.j)).or_default() += 1;
    }
    let slices = exec.map_range(n, |j| {
        let mut acc: Vec<(usize, usize, f64)> = Vec::new();
        for &(k, s) in &in_links[j] {
            let Some(targets) = out_links[j].get(&s) else { continue };
            let w = 1.0 / anchors[&(k, j)] as f64;
            let u = 1.0 / targets.len() as f64;
            acc.extend(targets.iter().map(|&i| (i, k, u * w)));
        }
        acc.sort_unstable_by_key(|e| (e.1, e.0));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(acc.len());
        for e in acc {
            match merged.last_mut() {
                Some(last) if (last.0, last.1) == (e.0, e.1) => last.2 += e.2,
                _ => merged.push(e),
            }
        }
        SparseColMatrix::from_triplets(n, n, merged)
    });
    SliceSet::new(n, slices.into_iter().collect::<Result<Vec<_>>>()?)
}

/// `ceil(x)` that treats values within rounding noise of an integer as
/// that integer, so `1e-4 * 1e6` gives 100 rather than 101.
fn ceil_count(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Random sparse slices: `ceil(sparsity * n^3)` distinct positions of the
/// `n x n^2` concatenation `[Q_1 .. Q_n]` get values in `(0, 1]`; columns
/// whose sum exceeds one are rescaled to sum to one.
pub fn gen_synthetic(n: usize, sparsity: f64, seed: u64) -> Result<SliceSet> {
    if n == 0 {
        return Err(invalid_config("n must be at least 1"));
    }
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(invalid_config(format!("sparsity must lie in (0, 1], got {sparsity}")));
    }
    let total = n
        .checked_mul(n)
        .and_then(|x| x.checked_mul(n))
        .ok_or_else(|| invalid_config(format!("n = {n} is too large")))?;
    let nnz = ceil_count(sparsity * total as f64).min(total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = sample(&mut rng, total, nnz);
    // columns of the concatenation, keyed by (j, k)
    let mut cols: BTreeMap<(usize, usize), Vec<(usize, f64)>> = BTreeMap::new();
    for p in positions.iter() {
        let (i, c) = (p % n, p / n);
        let value = 1.0 - rng.gen::<f64>();
        cols.entry((c / n, c % n)).or_default().push((i, value));
    }
    let mut entries = Vec::with_capacity(nnz);
    for ((j, k), col) in cols {
        let sum: f64 = col.iter().map(|e| e.1).sum();
        let scale = if sum > 1.0 { 1.0 / sum } else { 1.0 };
        entries.extend(col.into_iter().map(|(i, v)| (i, j, k, v * scale)));
    }
    SliceSet::from_entries(n, entries)
}

/// Random nonnegative `n x n` matrix with `max(1, round(density n^2))`
/// entries and total mass one, for the auxiliary matrix `G`.
pub fn gen_aux_matrix(n: usize, density: f64, seed: u64) -> Result<SparseColMatrix> {
    if n == 0 {
        return Err(invalid_config("n must be at least 1"));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(invalid_config(format!("density must lie in (0, 1], got {density}")));
    }
    let total = n * n;
    let nnz = ((density * total as f64).round() as usize).clamp(1, total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = sample(&mut rng, total, nnz);
    let mut t: Vec<(usize, usize, f64)> = positions
        .iter()
        .map(|p| (p % n, p / n, 1.0 - rng.gen::<f64>()))
        .collect();
    let mass: f64 = t.iter().map(|e| e.2).sum();
    for e in &mut t {
        e.2 /= mass;
    }
    SparseColMatrix::from_triplets(n, n, t)
}

pub fn read_slice_set(reader: impl BufRead) -> Result<SliceSet> {
    let mut lines = Lines::new(reader);
    lines.magic(SLICES_MAGIC)?;
    let [n, nnz] = lines.require::<2>("header \"n nnz\"")?;
    let (n, nnz) = (lines.usize(&n)?, lines.usize(&nnz)?);
    let mut per_slice: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); n];
    let mut seen = BTreeSet::new();
    for _ in 0..nnz {
        let [i, j, k, v] = lines.require::<4>("entry \"i j k v\"")?;
        let (i, j, k) = (lines.index(&i, n)?, lines.index(&j, n)?, lines.index(&k, n)?);
        let v = lines.value(&v)?;
        if v == 0.0 || v > 1.0 {
            return Err(lines.err(format!("value {v} outside (0, 1]")));
        }
        if !seen.insert((i, j, k)) {
            return Err(lines.err(format!("duplicate entry ({}, {}, {})", i + 1, j + 1, k + 1)));
        }
        per_slice[j].push((i, k, v));
    }
    lines.end(nnz)?;
    let slices = per_slice
        .into_iter()
        .map(|t| SparseColMatrix::from_triplets(n, n, t))
        .collect::<Result<Vec<_>>>()?;
    SliceSet::new(n, slices)
}

pub fn load_slice_set(path: impl AsRef<Path>) -> Result<SliceSet> {
    read_slice_set(open(path.as_ref())?)
}

/// Values are written with Rust's shortest round-trip formatting, so a
/// save/load cycle is bit-exact.
pub fn write_slice_set(mut w: impl Write, slices: &SliceSet) -> Result<()> {
    writeln!(w, "{SLICES_MAGIC} {FORMAT_VERSION}")?;
    writeln!(w, "{} {}", slices.n(), slices.nnz())?;
    for (i, j, k, v) in slices.entries() {
        writeln!(w, "{} {} {} {:e}", i + 1, j + 1, k + 1, v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_slice_set(path: impl AsRef<Path>, slices: &SliceSet) -> Result<()> {
    write_slice_set(create(path.as_ref())?, slices)
}

/// Metadata stored with a solver result.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultMeta {
    pub method: String,
    pub alpha: f64,
    pub beta: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub residual: Option<f64>,
    pub wall_time_s: f64,
    pub seed: Option<u64>,
}

struct Exp(f64);

impl std::fmt::Display for Exp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:e}", self.0)
    }
}

fn fmt_opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), |x| x.to_string())
}

pub fn write_result(mut w: impl Write, approx: &SparseUniformApprox, meta: &ResultMeta) -> Result<()> {
    writeln!(w, "{RESULT_MAGIC} {FORMAT_VERSION}")?;
    writeln!(w, "{} {}", approx.n(), approx.spikes().nnz())?;
    for (i, j, v) in approx.spikes().triplets() {
        writeln!(w, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    for (j, u) in approx.background().iter().enumerate() {
        writeln!(w, "{} {:e}", j + 1, u)?;
    }
    writeln!(w, "method={}", meta.method)?;
    writeln!(w, "alpha={}", meta.alpha)?;
    writeln!(w, "beta={}", fmt_opt(&meta.beta.map(Exp)))?;
    writeln!(w, "iterations={}", meta.iterations)?;
    writeln!(w, "converged={}", meta.converged)?;
    writeln!(w, "residual={}", fmt_opt(&meta.residual.map(Exp)))?;
    writeln!(w, "wall_time_s={}", meta.wall_time_s)?;
    writeln!(w, "seed={}", fmt_opt(&meta.seed))?;
    w.flush()?;
    Ok(())
}

pub fn save_result(path: impl AsRef<Path>, approx: &SparseUniformApprox, meta: &ResultMeta) -> Result<()> {
    write_result(create(path.as_ref())?, approx, meta)
}

pub fn read_result(reader: impl BufRead) -> Result<(SparseUniformApprox, ResultMeta)> {
    let mut lines = Lines::new(reader);
    lines.magic(RESULT_MAGIC)?;
    let [n, nnz] = lines.require::<2>("header \"n nnz_S\"")?;
    let (n, nnz) = (lines.usize(&n)?, lines.usize(&nnz)?);
    let mut t = Vec::with_capacity(nnz);
    let mut seen = BTreeSet::new();
    for _ in 0..nnz {
        let [i, j, v] = lines.require::<3>("spike \"i j v\"")?;
        let (i, j, v) = (lines.index(&i, n)?, lines.index(&j, n)?, lines.value(&v)?);
        if !seen.insert((i, j)) {
            return Err(lines.err(format!("duplicate spike ({}, {})", i + 1, j + 1)));
        }
        t.push((i, j, v));
    }
    let mut u = vec![0.0; n];
    for (expect, slot) in u.iter_mut().enumerate() {
        let [j, v] = lines.require::<2>("background \"j u\"")?;
        if lines.index(&j, n)? != expect {
            return Err(lines.err(format!("background rows must be listed in order, expected {}", expect + 1)));
        }
        *slot = lines.value(&v)?;
    }
    let mut kv: BTreeMap<String, String> = BTreeMap::new();
    while let Some(line) = lines.next_data()? {
        let Some((k, v)) = line.split_once('=') else {
            return Err(lines.err(format!("expected key=value, found {line:?}")));
        };
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |key: &str| -> Result<&String> {
        kv.get(key).ok_or_else(|| HoprError::Format(format!("missing metadata key {key}")))
    };
    let parse = |key: &str, s: &str| -> Result<f64> {
        s.parse().map_err(|_| HoprError::Format(format!("bad value for {key}: {s:?}")))
    };
    let opt_f64 = |key: &str| -> Result<Option<f64>> {
        let s = get(key)?;
        if s == "none" {
            Ok(None)
        } else {
            parse(key, s).map(Some)
        }
    };
    let meta = ResultMeta {
        method: get("method")?.clone(),
        alpha: parse("alpha", get("alpha")?)?,
        beta: opt_f64("beta")?,
        iterations: get("iterations")?
            .parse()
            .map_err(|_| HoprError::Format("bad value for iterations".into()))?,
        converged: get("converged")?
            .parse()
            .map_err(|_| HoprError::Format("bad value for converged".into()))?,
        residual: opt_f64("residual")?,
        wall_time_s: parse("wall_time_s", get("wall_time_s")?)?,
        seed: match get("seed")?.as_str() {
            "none" => None,
            s => Some(s.parse().map_err(|_| HoprError::Format(format!("bad seed {s:?}")))?),
        },
    };
    let s = SparseColMatrix::from_triplets(n, n, t)?;
    Ok((SparseUniformApprox::new(s, u)?, meta))
}

pub fn load_result(path: impl AsRef<Path>) -> Result<(SparseUniformApprox, ResultMeta)> {
    read_result(open(path.as_ref())?)
}
