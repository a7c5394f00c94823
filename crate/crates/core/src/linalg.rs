//! Row-oriented matrix storage, block views and the positive-part residual
//! kernels shared by every solver.
//!
//! A [`RowMatrix`] is either row-major dense or compressed sparse row (CSR).
//! Both layouts visit the entries of a row in ascending column order, so a
//! dot product over a dense row and over the same row stored sparsely perform
//! the same floating-point operations up to additions of signed zeros, which
//! are exact. Norms are accumulated with Neumaier compensated summation.

use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

/// Default relative tolerance for [`power_iteration`].
pub const DEFAULT_SPECTRAL_REL_TOL: f64 = 1e-10;

/// Smallest iteration cap used by [`power_iteration`]; the nominal cap is `10 * ncols`.
pub const MIN_POWER_ITERATIONS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("matrix has {} zero row(s): {}", .0.len(), preview(.0))]
    ZeroRows(Vec<usize>),
    #[error("matrix must have at least one row and one column")]
    Empty,
    #[error("entry ({row}, {col}) is outside a {nrows}x{ncols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("malformed CSR structure: {0}")]
    InvalidCsr(String),
    #[error("invalid block: {0}")]
    InvalidBlock(String),
}

fn preview(rows: &[usize]) -> String {
    const SHOWN: usize = 8;
    let mut s = rows
        .iter()
        .take(SHOWN)
        .map(|r| r.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    if rows.len() > SHOWN {
        s.push_str(", ...");
    }
    s
}

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of squares.
pub fn sum_of_squares(values: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for &v in values {
        acc.add(v * v);
    }
    acc.value()
}

/// Compensated sum of squares of the positive parts.
pub fn positive_sum_of_squares(values: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for &v in values {
        if v > 0.0 {
            acc.add(v * v);
        }
    }
    acc.value()
}

/// Componentwise `max(0, v)`.
pub fn positive_part(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect()
}

pub fn positive_part_in_place(v: &mut [f64]) {
    for x in v {
        if !(*x > 0.0) {
            *x = 0.0;
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

pub fn norm2(v: &[f64]) -> f64 {
    sum_of_squares(v).sqrt()
}

/// Backing layout of a [`RowMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub enum Storage {
    /// Row-major, `nrows * ncols` values.
    Dense { values: Vec<f64> },
    /// Compressed sparse row with strictly increasing column indices per row.
    Csr {
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    },
}

/// Borrowed view of one matrix row.
#[derive(Debug, Clone, Copy)]
pub enum Row<'a> {
    Dense(&'a [f64]),
    Sparse { cols: &'a [usize], vals: &'a [f64] },
}

impl<'a> Row<'a> {
    #[inline]
    pub fn dot(&self, x: &[f64]) -> f64 {
        match *self {
            Row::Dense(vals) => dot(vals, x),
            Row::Sparse { cols, vals } => cols
                .iter()
                .zip(vals)
                .fold(0.0, |acc, (&j, &v)| acc + v * x[j]),
        }
    }

    /// `y += alpha * row`.
    #[inline]
    pub fn axpy(&self, alpha: f64, y: &mut [f64]) {
        match *self {
            Row::Dense(vals) => {
                for (yj, &v) in y.iter_mut().zip(vals) {
                    *yj += alpha * v;
                }
            }
            Row::Sparse { cols, vals } => {
                for (&j, &v) in cols.iter().zip(vals) {
                    y[j] += alpha * v;
                }
            }
        }
    }

    /// Calls `f(col, value)` for each stored entry in ascending column order.
    pub fn for_each(&self, mut f: impl FnMut(usize, f64)) {
        match *self {
            Row::Dense(vals) => vals.iter().enumerate().for_each(|(j, &v)| f(j, v)),
            Row::Sparse { cols, vals } => {
                cols.iter().zip(vals).for_each(|(&j, &v)| f(j, v))
            }
        }
    }

    pub fn to_dense(&self, ncols: usize) -> Vec<f64> {
        let mut out = vec![0.0; ncols];
        self.for_each(|j, v| out[j] = v);
        out
    }
}

/// Row-accessible `m x n` matrix with cached squared row norms.
///
/// Construction rejects matrices with zero rows.
#[derive(Debug, Clone)]
pub struct RowMatrix {
    nrows: usize,
    ncols: usize,
    storage: Storage,
    row_norms_sq: Vec<f64>,
    frob_sq: f64,
}

impl PartialEq for RowMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.nrows == other.nrows && self.ncols == other.ncols && self.storage == other.storage
    }
}

impl RowMatrix {
    /// Builds a dense matrix from row-major values.
    pub fn from_dense(nrows: usize, ncols: usize, values: Vec<f64>) -> Result<Self, LinalgError> {
        if nrows == 0 || ncols == 0 {
            return Err(LinalgError::Empty);
        }
        if values.len() != nrows * ncols {
            return Err(LinalgError::DimensionMismatch {
                what: "dense values",
                expected: nrows * ncols,
                actual: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite {
                row: pos / ncols,
                col: pos % ncols,
            });
        }
        Self::finish(nrows, ncols, Storage::Dense { values })
    }

    /// Builds a dense matrix from a list of equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, LinalgError> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(nrows * ncols);
        for row in rows {
            if row.len() != ncols {
                return Err(LinalgError::DimensionMismatch {
                    what: "row length",
                    expected: ncols,
                    actual: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::from_dense(nrows, ncols, values)
    }

    /// Builds a CSR matrix; column indices must be strictly increasing within a row.
    pub fn from_csr(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, LinalgError> {
        if nrows == 0 || ncols == 0 {
            return Err(LinalgError::Empty);
        }
        if row_ptr.len() != nrows + 1 {
            return Err(LinalgError::InvalidCsr(format!(
                "row_ptr has length {}, expected {}",
                row_ptr.len(),
                nrows + 1
            )));
        }
        if col_idx.len() != values.len() {
            return Err(LinalgError::InvalidCsr(
                "col_idx and values differ in length".into(),
            ));
        }
        if row_ptr[0] != 0 || row_ptr[nrows] != values.len() {
            return Err(LinalgError::InvalidCsr(
                "row_ptr must start at 0 and end at nnz".into(),
            ));
        }
        for i in 0..nrows {
            let (lo, hi) = (row_ptr[i], row_ptr[i + 1]);
            if lo > hi {
                return Err(LinalgError::InvalidCsr(format!(
                    "row_ptr decreases at row {i}"
                )));
            }
            for p in lo..hi {
                let j = col_idx[p];
                if j >= ncols {
                    return Err(LinalgError::IndexOutOfRange {
                        row: i,
                        col: j,
                        nrows,
                        ncols,
                    });
                }
                if p > lo && col_idx[p - 1] >= j {
                    return Err(LinalgError::InvalidCsr(format!(
                        "columns of row {i} are not strictly increasing"
                    )));
                }
                if !values[p].is_finite() {
                    return Err(LinalgError::NonFinite { row: i, col: j });
                }
            }
        }
        Self::finish(
            nrows,
            ncols,
            Storage::Csr {
                row_ptr,
                col_idx,
                values,
            },
        )
    }

    /// Builds a CSR matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, LinalgError> {
        let (row_ptr, col_idx, values) = triplets_to_csr(nrows, ncols, triplets)?;
        Self::from_csr(nrows, ncols, row_ptr, col_idx, values)
    }

    fn finish(nrows: usize, ncols: usize, storage: Storage) -> Result<Self, LinalgError> {
        let mut m = RowMatrix {
            nrows,
            ncols,
            storage,
            row_norms_sq: Vec::new(),
            frob_sq: 0.0,
        };
        let mut norms = Vec::with_capacity(nrows);
        let mut zero = Vec::new();
        for i in 0..nrows {
            let mut acc = CompensatedSum::new();
            m.row(i).for_each(|_, v| acc.add(v * v));
            let s = acc.value();
            if s <= 0.0 {
                zero.push(i);
            }
            norms.push(s);
        }
        if !zero.is_empty() {
            return Err(LinalgError::ZeroRows(zero));
        }
        let mut total = CompensatedSum::new();
        norms.iter().for_each(|&s| total.add(s));
        m.frob_sq = total.value();
        m.row_norms_sq = norms;
        Ok(m)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Csr { .. })
    }

    /// Number of stored entries (all `m*n` for dense storage).
    pub fn stored_entries(&self) -> usize {
        match &self.storage {
            Storage::Dense { values } => values.len(),
            Storage::Csr { values, .. } => values.len(),
        }
    }

    /// Number of entries that are not exactly zero.
    pub fn nnz(&self) -> usize {
        match &self.storage {
            Storage::Dense { values } | Storage::Csr { values, .. } => {
                values.iter().filter(|v| **v != 0.0).count()
            }
        }
    }

    /// `nnz / (m n)`.
    pub fn density(&self) -> f64 {
        self.nnz() as f64 / (self.nrows as f64 * self.ncols as f64)
    }

    #[inline]
    pub fn row(&self, i: usize) -> Row<'_> {
        match &self.storage {
            Storage::Dense { values } => Row::Dense(&values[i * self.ncols..(i + 1) * self.ncols]),
            Storage::Csr {
                row_ptr,
                col_idx,
                values,
            } => {
                let (lo, hi) = (row_ptr[i], row_ptr[i + 1]);
                Row::Sparse {
                    cols: &col_idx[lo..hi],
                    vals: &values[lo..hi],
                }
            }
        }
    }

    #[inline]
    pub fn row_norm_sq(&self, i: usize) -> f64 {
        self.row_norms_sq[i]
    }

    pub fn row_norms_sq(&self) -> &[f64] {
        &self.row_norms_sq
    }

    /// `||A||_F^2`.
    pub fn frob_sq(&self) -> f64 {
        self.frob_sq
    }

    fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<(), LinalgError> {
        if expected == actual {
            Ok(())
        } else {
            Err(LinalgError::DimensionMismatch {
                what,
                expected,
                actual,
            })
        }
    }

    /// `out = A x`.
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), LinalgError> {
        Self::check_len("x", self.ncols, x.len())?;
        Self::check_len("output", self.nrows, out.len())?;
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).dot(x);
        }
        Ok(())
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let mut out = vec![0.0; self.nrows];
        self.matvec_into(x, &mut out)?;
        Ok(out)
    }

    /// `out = A x - b`.
    pub fn residual_into(&self, x: &[f64], b: &[f64], out: &mut [f64]) -> Result<(), LinalgError> {
        Self::check_len("x", self.ncols, x.len())?;
        Self::check_len("b", self.nrows, b.len())?;
        Self::check_len("output", self.nrows, out.len())?;
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).dot(x) - b[i];
        }
        Ok(())
    }

    pub fn residual(&self, x: &[f64], b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let mut out = vec![0.0; self.nrows];
        self.residual_into(x, b, &mut out)?;
        Ok(out)
    }

    /// `out = A^T v`.
    pub fn transpose_apply_into(&self, v: &[f64], out: &mut [f64]) -> Result<(), LinalgError> {
        Self::check_len("v", self.nrows, v.len())?;
        Self::check_len("output", self.ncols, out.len())?;
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 {
                self.row(i).axpy(vi, out);
            }
        }
        Ok(())
    }

    /// Row-major dense copy of the entries.
    pub fn to_dense_values(&self) -> Vec<f64> {
        match &self.storage {
            Storage::Dense { values } => values.clone(),
            Storage::Csr { .. } => {
                let mut out = vec![0.0; self.nrows * self.ncols];
                for i in 0..self.nrows {
                    self.row(i).for_each(|j, v| out[i * self.ncols + j] = v);
                }
                out
            }
        }
    }

    pub fn to_dense(&self) -> RowMatrix {
        match &self.storage {
            Storage::Dense { .. } => self.clone(),
            Storage::Csr { .. } => RowMatrix {
                nrows: self.nrows,
                ncols: self.ncols,
                storage: Storage::Dense {
                    values: self.to_dense_values(),
                },
                row_norms_sq: self.row_norms_sq.clone(),
                frob_sq: self.frob_sq,
            },
        }
    }

    /// CSR copy; exact zeros of a dense matrix are not stored.
    pub fn to_csr(&self) -> RowMatrix {
        match &self.storage {
            Storage::Csr { .. } => self.clone(),
            Storage::Dense { values } => {
                let mut row_ptr = Vec::with_capacity(self.nrows + 1);
                let mut col_idx = Vec::new();
                let mut vals = Vec::new();
                row_ptr.push(0);
                for i in 0..self.nrows {
                    for (j, &v) in values[i * self.ncols..(i + 1) * self.ncols].iter().enumerate() {
                        if v != 0.0 {
                            col_idx.push(j);
                            vals.push(v);
                        }
                    }
                    row_ptr.push(col_idx.len());
                }
                RowMatrix {
                    nrows: self.nrows,
                    ncols: self.ncols,
                    storage: Storage::Csr {
                        row_ptr,
                        col_idx,
                        values: vals,
                    },
                    row_norms_sq: self.row_norms_sq.clone(),
                    frob_sq: self.frob_sq,
                }
            }
        }
    }

    /// Column-major access to the entries, i.e. the rows of `A^T` in CSR form.
    /// Columns may be empty, so this is not a `RowMatrix`.
    pub fn columns(&self) -> ColumnIndex {
        let mut counts = vec![0usize; self.ncols + 1];
        for i in 0..self.nrows {
            self.row(i).for_each(|j, v| {
                if v != 0.0 {
                    counts[j + 1] += 1;
                }
            });
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let nnz = counts[self.ncols];
        let mut next = counts.clone();
        let mut rows = vec![0usize; nnz];
        let mut vals = vec![0.0; nnz];
        for i in 0..self.nrows {
            self.row(i).for_each(|j, v| {
                if v != 0.0 {
                    rows[next[j]] = i;
                    vals[next[j]] = v;
                    next[j] += 1;
                }
            });
        }
        ColumnIndex {
            col_ptr: counts,
            row_idx: rows,
            values: vals,
        }
    }

    /// Estimate of `||A||_2^2` by power iteration over all rows.
    pub fn spectral_norm_sq(&self, rel_tol: f64) -> SpectralEstimate {
        let rows: Vec<usize> = (0..self.nrows).collect();
        power_iteration(self, &rows, rel_tol)
    }
}

/// Compressed-sparse-column copy of a matrix's nonzeros.
#[derive(Debug, Clone)]
pub struct ColumnIndex {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl ColumnIndex {
    /// `out += alpha * A[:, j]`.
    #[inline]
    pub fn axpy_column(&self, j: usize, alpha: f64, out: &mut [f64]) {
        let (lo, hi) = (self.col_ptr[j], self.col_ptr[j + 1]);
        for p in lo..hi {
            out[self.row_idx[p]] += alpha * self.values[p];
        }
    }

    pub fn column_nnz(&self, j: usize) -> usize {
        self.col_ptr[j + 1] - self.col_ptr[j]
    }
}

pub(crate) fn triplets_to_csr(
    nrows: usize,
    ncols: usize,
    triplets: &[(usize, usize, f64)],
) -> Result<(Vec<usize>, Vec<usize>, Vec<f64>), LinalgError> {
    if nrows == 0 || ncols == 0 {
        return Err(LinalgError::Empty);
    }
    for &(i, j, v) in triplets {
        if i >= nrows || j >= ncols {
            return Err(LinalgError::IndexOutOfRange {
                row: i,
                col: j,
                nrows,
                ncols,
            });
        }
        if !v.is_finite() {
            return Err(LinalgError::NonFinite { row: i, col: j });
        }
    }
    let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
    sorted.sort_by_key(|e| (e.0, e.1));
    let mut row_ptr = vec![0usize; nrows + 1];
    let mut col_idx = Vec::with_capacity(sorted.len());
    let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
    let mut last: Option<(usize, usize)> = None;
    for (i, j, v) in sorted {
        if last == Some((i, j)) {
            *values.last_mut().expect("duplicate follows an entry") += v;
        } else {
            col_idx.push(j);
            values.push(v);
            row_ptr[i + 1] += 1;
            last = Some((i, j));
        }
    }
    for i in 0..nrows {
        row_ptr[i + 1] += row_ptr[i];
    }
    Ok((row_ptr, col_idx, values))
}

/// Result of a power iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate {
    /// Rayleigh quotient; never exceeds the true largest eigenvalue of `A_I^T A_I`
    /// beyond round-off.
    pub value: f64,
    pub iterations: usize,
    /// `false` when the iteration cap was hit before the tolerance was met.
    pub converged: bool,
}

/// Power iteration on `A_I^T A_I` for the rows `I` of `a`.
///
/// Stops once two successive Rayleigh quotients differ by at most
/// `rel_tol` relative to the newer one, or after `max(10 n, 1000)` iterations.
/// The start vector is a standard normal draw seeded from the row indices, so
/// the estimate is reproducible.
pub fn power_iteration(a: &RowMatrix, rows: &[usize], rel_tol: f64) -> SpectralEstimate {
    assert!(!rows.is_empty(), "power iteration on an empty block");
    let max_row = rows
        .iter()
        .map(|&i| a.row_norm_sq(i))
        .fold(0.0_f64, f64::max);
    if rows.len() == 1 {
        return SpectralEstimate {
            value: max_row,
            iterations: 0,
            converged: true,
        };
    }
    let n = a.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(block_seed(a, rows));
    let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let cap = (10 * n).max(MIN_POWER_ITERATIONS);
    let mut y = vec![0.0; rows.len()];
    let mut z = vec![0.0; n];
    let mut prev: Option<f64> = None;
    let mut lambda = 0.0;
    for it in 1..=cap {
        for (yk, &i) in y.iter_mut().zip(rows) {
            *yk = a.row(i).dot(&v);
        }
        lambda = sum_of_squares(&y);
        z.iter_mut().for_each(|e| *e = 0.0);
        for (&yk, &i) in y.iter().zip(rows) {
            a.row(i).axpy(yk, &mut z);
        }
        let nz = norm2(&z);
        if nz == 0.0 {
            // start vector in the null space; a row norm is still a valid lower bound
            return SpectralEstimate {
                value: max_row,
                iterations: it,
                converged: false,
            };
        }
        v.iter_mut().zip(&z).for_each(|(vi, zi)| *vi = zi / nz);
        if let Some(p) = prev {
            if (lambda - p).abs() <= rel_tol * lambda {
                return SpectralEstimate {
                    value: lambda.max(max_row),
                    iterations: it,
                    converged: true,
                };
            }
        }
        prev = Some(lambda);
    }
    SpectralEstimate {
        value: lambda.max(max_row),
        iterations: cap,
        converged: false,
    }
}

fn block_seed(a: &RowMatrix, rows: &[usize]) -> u64 {
    // FNV-1a over the shape and the row indices
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |x: u64| {
        for byte in x.to_le_bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    feed(a.nrows() as u64);
    feed(a.ncols() as u64);
    for &i in rows {
        feed(i as u64);
    }
    h
}

/// A set of row indices of a parent matrix, with its cached norms.
///
/// Rows are kept in ascending order.
#[derive(Debug)]
pub struct Block {
    rows: Vec<usize>,
    frob_sq: f64,
    sigma_max_sq: OnceLock<SpectralEstimate>,
}

impl Clone for Block {
    fn clone(&self) -> Self {
        let sigma = OnceLock::new();
        if let Some(s) = self.sigma_max_sq.get() {
            let _ = sigma.set(*s);
        }
        Block {
            rows: self.rows.clone(),
            frob_sq: self.frob_sq,
            sigma_max_sq: sigma,
        }
    }
}

impl Block {
    pub fn new(a: &RowMatrix, mut rows: Vec<usize>) -> Result<Self, LinalgError> {
        if rows.is_empty() {
            return Err(LinalgError::InvalidBlock("block is empty".into()));
        }
        rows.sort_unstable();
        if let Some(w) = rows.windows(2).find(|w| w[0] == w[1]) {
            return Err(LinalgError::InvalidBlock(format!(
                "row {} listed twice",
                w[0]
            )));
        }
        let last = *rows.last().expect("nonempty");
        if last >= a.nrows() {
            return Err(LinalgError::InvalidBlock(format!(
                "row {last} out of range for {} rows",
                a.nrows()
            )));
        }
        let mut acc = CompensatedSum::new();
        rows.iter().for_each(|&i| acc.add(a.row_norm_sq(i)));
        Ok(Block {
            rows,
            frob_sq: acc.value(),
            sigma_max_sq: OnceLock::new(),
        })
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `||A_I||_F^2`.
    pub fn frob_sq(&self) -> f64 {
        self.frob_sq
    }

    pub fn view<'a>(&'a self, matrix: &'a RowMatrix) -> BlockView<'a> {
        BlockView {
            matrix,
            block: self,
        }
    }
}

/// A [`Block`] paired with its parent matrix.
#[derive(Debug, Clone, Copy)]
pub struct BlockView<'a> {
    matrix: &'a RowMatrix,
    block: &'a Block,
}

impl<'a> BlockView<'a> {
    pub fn matrix(&self) -> &'a RowMatrix {
        self.matrix
    }

    pub fn rows(&self) -> &'a [usize] {
        &self.block.rows
    }

    pub fn len(&self) -> usize {
        self.block.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.block.rows.is_empty()
    }

    pub fn frob_sq(&self) -> f64 {
        self.block.frob_sq
    }

    /// `A_I x - b_I`, ordered like [`BlockView::rows`].
    pub fn residual(&self, x: &[f64], b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let mut out = vec![0.0; self.len()];
        self.residual_into(x, b, &mut out)?;
        Ok(out)
    }

    pub fn residual_into(&self, x: &[f64], b: &[f64], out: &mut [f64]) -> Result<(), LinalgError> {
        RowMatrix::check_len("x", self.matrix.ncols(), x.len())?;
        RowMatrix::check_len("b", self.matrix.nrows(), b.len())?;
        RowMatrix::check_len("output", self.len(), out.len())?;
        for (o, &i) in out.iter_mut().zip(self.rows()) {
            *o = self.matrix.row(i).dot(x) - b[i];
        }
        Ok(())
    }

    /// `A_I^T v`.
    pub fn transpose_apply(&self, v: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let mut out = vec![0.0; self.matrix.ncols()];
        self.transpose_apply_into(v, &mut out)?;
        Ok(out)
    }

    pub fn transpose_apply_into(&self, v: &[f64], out: &mut [f64]) -> Result<(), LinalgError> {
        RowMatrix::check_len("v", self.len(), v.len())?;
        RowMatrix::check_len("output", self.matrix.ncols(), out.len())?;
        out.iter_mut().for_each(|o| *o = 0.0);
        for (&vk, &i) in v.iter().zip(self.rows()) {
            if vk != 0.0 {
                self.matrix.row(i).axpy(vk, out);
            }
        }
        Ok(())
    }

    /// Cached `sigma_max(A_I)^2` at [`DEFAULT_SPECTRAL_REL_TOL`]; computed once.
    pub fn spectral_norm_sq(&self) -> SpectralEstimate {
        *self
            .block
            .sigma_max_sq
            .get_or_init(|| power_iteration(self.matrix, self.rows(), DEFAULT_SPECTRAL_REL_TOL))
    }

    /// Uncached estimate at a caller-chosen tolerance.
    pub fn spectral_norm_sq_with(&self, rel_tol: f64) -> SpectralEstimate {
        power_iteration(self.matrix, self.rows(), rel_tol)
    }
}
