//! Construction of feasibility instances `Ax <= b`: random generation,
//! Matrix Market ingestion and the LP-to-feasibility transformation.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, LinalgError, RowMatrix};
use crate::rng::{seeded, Stream};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error(transparent)]
    Linalg(LinalgError),
    #[error("matrix has zero rows (1-based): {0:?}")]
    ZeroRows(Vec<usize>),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("LP instance has no optimal value; the cost row cannot be formed")]
    MissingOptimum,
    #[error("invalid LP instance: {0}")]
    InvalidLp(String),
    #[error("right-hand side has length {actual}, matrix has {expected} rows")]
    RhsLength { expected: usize, actual: usize },
    #[error("sparse generation needs m*n >= 2, got {m}x{n}")]
    DensityUndefined { m: usize, n: usize },
}

impl From<LinalgError> for ProblemError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::ZeroRows(rows) => ProblemError::ZeroRows(rows.iter().map(|r| r + 1).collect()),
            other => ProblemError::Linalg(other),
        }
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> ProblemError {
    ProblemError::Parse {
        line,
        message: message.into(),
    }
}

/// Where an instance came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    RandomDense { m: usize, n: usize, seed: u64 },
    RandomSparse { m: usize, n: usize, seed: u64 },
    MatrixMarket { path: PathBuf, rhs_seed: Option<u64> },
    LpTransform { path: Option<PathBuf>, dropped_rows: usize },
    Custom,
}

/// `S = {x : Ax <= b}` with an optional point known to lie in `S`.
#[derive(Debug, Clone)]
pub struct FeasibilityProblem {
    a: RowMatrix,
    b: Vec<f64>,
    b_norm: f64,
    provenance: Provenance,
    certificate: Option<Vec<f64>>,
}

impl FeasibilityProblem {
    pub fn new(a: RowMatrix, b: Vec<f64>, provenance: Provenance) -> Result<Self, ProblemError> {
        if b.len() != a.nrows() {
            return Err(ProblemError::RhsLength {
                expected: a.nrows(),
                actual: b.len(),
            });
        }
        if let Some(i) = b.iter().position(|v| !v.is_finite()) {
            return Err(ProblemError::Linalg(LinalgError::NonFinite { row: i, col: 0 }));
        }
        let b_norm = linalg::norm2(&b);
        Ok(FeasibilityProblem {
            a,
            b,
            b_norm,
            provenance,
            certificate: None,
        })
    }

    /// Attaches a feasible point; fails if it is not (to `1e-9` relative slack).
    pub fn with_certificate(mut self, x: Vec<f64>) -> Result<Self, ProblemError> {
        if x.len() != self.a.ncols() {
            return Err(ProblemError::Linalg(LinalgError::DimensionMismatch {
                what: "certificate",
                expected: self.a.ncols(),
                actual: x.len(),
            }));
        }
        let r = self.a.residual(&x, &self.b)?;
        for (i, ri) in r.iter().enumerate() {
            if *ri > 1e-9 * (1.0 + self.b[i].abs()) {
                return Err(ProblemError::InvalidLp(format!(
                    "certificate violates row {} by {ri:e}",
                    i + 1
                )));
            }
        }
        self.certificate = Some(x);
        Ok(self)
    }

    pub fn a(&self) -> &RowMatrix {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn b_norm(&self) -> f64 {
        self.b_norm
    }

    pub fn nrows(&self) -> usize {
        self.a.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.a.ncols()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn certificate(&self) -> Option<&[f64]> {
        self.certificate.as_deref()
    }

    /// `A x - b`.
    pub fn residual(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        self.a.residual(x, &self.b)
    }

    /// `||(Ax - b)_+||_2`.
    pub fn violation(&self, x: &[f64]) -> Result<f64, LinalgError> {
        Ok(linalg::positive_sum_of_squares(&self.residual(x)?).sqrt())
    }
}

/// `m x n` matrix of independent standard normal entries.
pub fn generate_dense(m: usize, n: usize, seed: u64) -> Result<RowMatrix, ProblemError> {
    let mut rng = seeded(seed, Stream::Matrix);
    let values = (0..m * n).map(|_| StandardNormal.sample(&mut rng)).collect();
    Ok(RowMatrix::from_dense(m, n, values)?)
}

/// Nonzero fraction used by [`generate_sparse`]: `1 / (2 ln(m n))`.
pub fn sparse_density(m: usize, n: usize) -> f64 {
    1.0 / (2.0 * ((m as f64) * (n as f64)).ln())
}

/// Sparse `m x n` matrix, each entry nonzero with probability
/// [`sparse_density`], nonzero values standard normal.
///
/// Positions are drawn as a Bernoulli process over the row-major index using
/// geometric gaps. A row left empty receives one standard normal entry at a
/// uniformly drawn column, so the result never has zero rows.
pub fn generate_sparse(m: usize, n: usize, seed: u64) -> Result<RowMatrix, ProblemError> {
    if m == 0 || n == 0 {
        return Err(ProblemError::Linalg(LinalgError::Empty));
    }
    if m * n < 2 {
        return Err(ProblemError::DensityUndefined { m, n });
    }
    let density = sparse_density(m, n);
    let mut rng = seeded(seed, Stream::Matrix);
    let total = (m as u64) * (n as u64);
    let log_q = (1.0 - density).ln();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    let mut pos: u64 = 0;
    let mut first = true;
    loop {
        // 1 - u lies in (0, 1]
        let u: f64 = 1.0 - rng.random::<f64>();
        let gap = (u.ln() / log_q).floor();
        if !gap.is_finite() || gap >= total as f64 {
            break;
        }
        let step = gap as u64 + if first { 0 } else { 1 };
        first = false;
        pos = match pos.checked_add(step) {
            Some(p) if p < total => p,
            _ => break,
        };
        let v = nonzero_normal(&mut rng);
        rows[(pos / n as u64) as usize].push(((pos % n as u64) as usize, v));
    }
    for row in rows.iter_mut() {
        if row.is_empty() {
            let j = rng.random_range(0..n);
            row.push((j, nonzero_normal(&mut rng)));
        }
    }
    let mut row_ptr = Vec::with_capacity(m + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for row in rows {
        for (j, v) in row {
            col_idx.push(j);
            values.push(v);
        }
        row_ptr.push(col_idx.len());
    }
    Ok(RowMatrix::from_csr(m, n, row_ptr, col_idx, values)?)
}

fn nonzero_normal<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let v: f64 = StandardNormal.sample(rng);
        if v != 0.0 {
            return v;
        }
    }
}

/// Right-hand side `b = 0.5 A x1 + 0.5 A x2 + x3` together with the point
/// `0.5 (x1 + x2)`, which satisfies every inequality with slack `x3 >= 0.1`.
#[derive(Debug, Clone)]
pub struct SyntheticRhs {
    pub b: Vec<f64>,
    pub certificate: Vec<f64>,
}

/// Draws `x1, x2 ~ N(0, I_n)` and `x3 ~ U[0.1, 1]^m` and forms the right-hand side.
pub fn synth_rhs(a: &RowMatrix, seed: u64) -> SyntheticRhs {
    let mut rng = seeded(seed, Stream::Rhs);
    let n = a.ncols();
    let x1: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let x2: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let slack = Uniform::new_inclusive(0.1, 1.0).expect("valid range");
    let x3: Vec<f64> = (0..a.nrows()).map(|_| slack.sample(&mut rng)).collect();
    rhs_from_parts(a, &x1, &x2, &x3)
}

/// `b = 0.5 A x1 + 0.5 A x2 + x3` for given parts.
pub fn rhs_from_parts(a: &RowMatrix, x1: &[f64], x2: &[f64], x3: &[f64]) -> SyntheticRhs {
    assert_eq!(x1.len(), a.ncols());
    assert_eq!(x2.len(), a.ncols());
    assert_eq!(x3.len(), a.nrows());
    let b = (0..a.nrows())
        .map(|i| {
            let row = a.row(i);
            0.5 * row.dot(x1) + 0.5 * row.dot(x2) + x3[i]
        })
        .collect();
    let certificate = x1.iter().zip(x2).map(|(p, q)| 0.5 * (p + q)).collect();
    SyntheticRhs { b, certificate }
}

/// Random dense instance with a synthetic right-hand side.
pub fn random_dense_problem(m: usize, n: usize, seed: u64) -> Result<FeasibilityProblem, ProblemError> {
    let a = generate_dense(m, n, seed)?;
    let rhs = synth_rhs(&a, seed);
    Ok(FeasibilityProblem::new(a, rhs.b, Provenance::RandomDense { m, n, seed })?
        .with_certificate_unchecked(rhs.certificate))
}

/// Random sparse instance with a synthetic right-hand side.
pub fn random_sparse_problem(m: usize, n: usize, seed: u64) -> Result<FeasibilityProblem, ProblemError> {
    let a = generate_sparse(m, n, seed)?;
    let rhs = synth_rhs(&a, seed);
    Ok(FeasibilityProblem::new(a, rhs.b, Provenance::RandomSparse { m, n, seed })?
        .with_certificate_unchecked(rhs.certificate))
}

/// Pairs a fixed matrix with a fresh synthetic right-hand side.
pub fn problem_with_synthetic_rhs(
    a: RowMatrix,
    seed: u64,
    provenance: Provenance,
) -> Result<FeasibilityProblem, ProblemError> {
    let rhs = synth_rhs(&a, seed);
    Ok(FeasibilityProblem::new(a, rhs.b, provenance)?.with_certificate_unchecked(rhs.certificate))
}

impl FeasibilityProblem {
    fn with_certificate_unchecked(mut self, x: Vec<f64>) -> Self {
        self.certificate = Some(x);
        self
    }
}

// ---------------------------------------------------------------------------
// Matrix Market

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmFormat {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmField {
    Real,
    Integer,
    /// Structure only; every listed entry is read as `1.0`.
    Pattern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmSymmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MmHeader {
    pub format: MmFormat,
    pub field: MmField,
    pub symmetry: MmSymmetry,
}

fn parse_mm_header(line: &str) -> Result<MmHeader, ProblemError> {
    let tokens: Vec<String> = line.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.first().map(String::as_str) != Some("%%matrixmarket") {
        return Err(parse_err(1, "missing %%MatrixMarket banner"));
    }
    if tokens.len() != 5 {
        return Err(parse_err(1, "banner must read: %%MatrixMarket matrix <format> <field> <symmetry>"));
    }
    if tokens[1] != "matrix" {
        return Err(parse_err(1, format!("unsupported object '{}'", tokens[1])));
    }
    let format = match tokens[2].as_str() {
        "coordinate" => MmFormat::Coordinate,
        "array" => MmFormat::Array,
        other => return Err(parse_err(1, format!("unsupported format '{other}'"))),
    };
    let field = match tokens[3].as_str() {
        "real" | "double" => MmField::Real,
        "integer" => MmField::Integer,
        "pattern" => MmField::Pattern,
        other => return Err(parse_err(1, format!("unsupported field '{other}' (real matrices only)"))),
    };
    let symmetry = match tokens[4].as_str() {
        "general" => MmSymmetry::General,
        "symmetric" => MmSymmetry::Symmetric,
        "skew-symmetric" => MmSymmetry::SkewSymmetric,
        other => return Err(parse_err(1, format!("unsupported symmetry '{other}'"))),
    };
    if format == MmFormat::Array && field == MmField::Pattern {
        return Err(parse_err(1, "pattern field is not valid for array format"));
    }
    Ok(MmHeader {
        format,
        field,
        symmetry,
    })
}

fn parse_index(tok: Option<&str>, line: usize, what: &str, bound: usize) -> Result<usize, ProblemError> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    let v: usize = tok
        .parse()
        .map_err(|_| parse_err(line, format!("cannot parse {what} '{tok}'")))?;
    if v == 0 || v > bound {
        return Err(parse_err(line, format!("{what} {v} out of range 1..={bound}")));
    }
    Ok(v - 1)
}

fn parse_real(tok: Option<&str>, line: usize, what: &str) -> Result<f64, ProblemError> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(line, format!("cannot parse {what} '{tok}'")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite {what}")));
    }
    Ok(v)
}

/// Reads a Matrix Market file. Coordinate files become CSR, array files dense.
pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<RowMatrix, ProblemError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| ProblemError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_matrix_market(BufReader::new(file))
}

/// Parses Matrix Market text. Symmetric storage is expanded, duplicate
/// coordinate entries are summed, and a matrix with zero rows is rejected.
pub fn parse_matrix_market<R: BufRead>(reader: R) -> Result<RowMatrix, ProblemError> {
    let mut lines = reader.lines().enumerate().map(|(k, l)| (k + 1, l));
    let header = match lines.next() {
        Some((_, Ok(l))) => parse_mm_header(&l)?,
        Some((ln, Err(e))) => return Err(parse_err(ln, e.to_string())),
        None => return Err(parse_err(1, "empty file")),
    };

    let mut data = lines.filter_map(|(ln, l)| match l {
        Ok(s) => {
            let t = s.trim();
            if t.is_empty() || t.starts_with('%') {
                None
            } else {
                Some(Ok((ln, t.to_string())))
            }
        }
        Err(e) => Some(Err(parse_err(ln, e.to_string()))),
    });

    let (size_line, size) = data
        .next()
        .ok_or_else(|| parse_err(1, "missing size line"))??;
    let mut toks = size.split_whitespace();
    let count = |t: Option<&str>, what: &str| -> Result<usize, ProblemError> {
        let t = t.ok_or_else(|| parse_err(size_line, format!("missing {what}")))?;
        t.parse()
            .map_err(|_| parse_err(size_line, format!("cannot parse {what} '{t}'")))
    };
    let m = count(toks.next(), "row count")?;
    let n = count(toks.next(), "column count")?;
    if m == 0 || n == 0 {
        return Err(parse_err(size_line, "matrix dimensions must be positive"));
    }
    if header.symmetry != MmSymmetry::General && m != n {
        return Err(parse_err(size_line, "symmetric storage requires a square matrix"));
    }

    match header.format {
        MmFormat::Coordinate => {
            let nnz = count(toks.next(), "entry count")?;
            if toks.next().is_some() {
                return Err(parse_err(size_line, "trailing tokens on size line"));
            }
            let mut triplets = Vec::with_capacity(nnz * 2);
            let mut seen = 0usize;
            for item in data {
                let (ln, text) = item?;
                if seen == nnz {
                    return Err(parse_err(ln, format!("more than {nnz} entries")));
                }
                let mut t = text.split_whitespace();
                let i = parse_index(t.next(), ln, "row index", m)?;
                let j = parse_index(t.next(), ln, "column index", n)?;
                let v = match header.field {
                    MmField::Pattern => 1.0,
                    _ => parse_real(t.next(), ln, "value")?,
                };
                if t.next().is_some() {
                    return Err(parse_err(ln, "trailing tokens after entry"));
                }
                triplets.push((i, j, v));
                match header.symmetry {
                    MmSymmetry::General => {}
                    MmSymmetry::Symmetric => {
                        if i != j {
                            triplets.push((j, i, v));
                        }
                    }
                    MmSymmetry::SkewSymmetric => {
                        if i == j {
                            return Err(parse_err(ln, "skew-symmetric matrix with a diagonal entry"));
                        }
                        triplets.push((j, i, -v));
                    }
                }
                seen += 1;
            }
            if seen != nnz {
                return Err(parse_err(size_line, format!("expected {nnz} entries, found {seen}")));
            }
            Ok(RowMatrix::from_triplets(m, n, &triplets)?)
        }
        MmFormat::Array => {
            if toks.next().is_some() {
                return Err(parse_err(size_line, "trailing tokens on size line"));
            }
            // column-major; symmetric variants list the lower triangle only
            let mut slots: Vec<(usize, usize)> = Vec::new();
            for j in 0..n {
                let start = match header.symmetry {
                    MmSymmetry::General => 0,
                    MmSymmetry::Symmetric => j,
                    MmSymmetry::SkewSymmetric => j + 1,
                };
                for i in start..m {
                    slots.push((i, j));
                }
            }
            let mut values = vec![0.0; m * n];
            let mut next = 0usize;
            let mut last_line = size_line;
            for item in data {
                let (ln, text) = item?;
                last_line = ln;
                for tok in text.split_whitespace() {
                    if next == slots.len() {
                        return Err(parse_err(ln, format!("more than {} values", slots.len())));
                    }
                    let v = parse_real(Some(tok), ln, "value")?;
                    let (i, j) = slots[next];
                    values[i * n + j] = v;
                    match header.symmetry {
                        MmSymmetry::General => {}
                        MmSymmetry::Symmetric => values[j * n + i] = v,
                        MmSymmetry::SkewSymmetric => values[j * n + i] = -v,
                    }
                    next += 1;
                }
            }
            if next != slots.len() {
                return Err(parse_err(
                    last_line,
                    format!("expected {} values, found {next}", slots.len()),
                ));
            }
            Ok(RowMatrix::from_dense(m, n, values)?)
        }
    }
}

// ---------------------------------------------------------------------------
// LP instances

/// `min c^T x  s.t.  A_eq x = b_eq,  l <= x <= u` with known optimum `p_star`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpInstance {
    pub n_rows: usize,
    pub n_cols: usize,
    /// Zero-based `(row, col, value)` entries of `A_eq`; duplicates are summed.
    pub a_eq: Vec<(usize, usize, f64)>,
    pub b_eq: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cost: Vec<f64>,
    pub p_star: Option<f64>,
    /// Optional optimal point, used as the feasibility certificate.
    pub x_star: Option<Vec<f64>>,
}

impl LpInstance {
    pub fn validate(&self) -> Result<(), ProblemError> {
        let bad = |m: String| Err(ProblemError::InvalidLp(m));
        if self.n_cols == 0 {
            return bad("no variables".into());
        }
        for (what, len, want) in [
            ("beq", self.b_eq.len(), self.n_rows),
            ("l", self.lower.len(), self.n_cols),
            ("u", self.upper.len(), self.n_cols),
            ("c", self.cost.len(), self.n_cols),
        ] {
            if len != want {
                return bad(format!("{what} has {len} entries, expected {want}"));
            }
        }
        for &(i, j, v) in &self.a_eq {
            if i >= self.n_rows || j >= self.n_cols {
                return bad(format!("Aeq entry ({}, {}) out of range", i + 1, j + 1));
            }
            if !v.is_finite() {
                return bad(format!("Aeq entry ({}, {}) is not finite", i + 1, j + 1));
            }
        }
        if self.b_eq.iter().chain(&self.cost).any(|v| !v.is_finite()) {
            return bad("beq and c must be finite".into());
        }
        for j in 0..self.n_cols {
            let (l, u) = (self.lower[j], self.upper[j]);
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return bad(format!("invalid bounds on x{}", j + 1));
            }
            if l > u {
                return bad(format!("l > u on x{}", j + 1));
            }
        }
        if let Some(p) = self.p_star {
            if !p.is_finite() {
                return bad("p_star must be finite".into());
            }
        }
        if let Some(x) = &self.x_star {
            if x.len() != self.n_cols {
                return bad("xstar has the wrong length".into());
            }
        }
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, ProblemError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ProblemError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Parses the plain-text LP format:
    ///
    /// ```text
    /// lp <n_rows> <n_cols> [p_star]
    /// Aeq
    /// <i> <j> <value>        (1-based, one entry per line)
    /// beq
    /// <n_rows values>
    /// l
    /// <n_cols values, may be -inf>
    /// u
    /// <n_cols values, may be inf>
    /// c
    /// <n_cols values>
    /// xstar                  (optional)
    /// <n_cols values>
    /// ```
    ///
    /// Values may wrap across lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ProblemError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());

        let (hl, header) = lines.next().ok_or_else(|| parse_err(1, "empty LP file"))?;
        let mut ht = header.split_whitespace();
        if ht.next() != Some("lp") {
            return Err(parse_err(hl, "header must start with 'lp'"));
        }
        let dim = |t: Option<&str>, what: &str| -> Result<usize, ProblemError> {
            let t = t.ok_or_else(|| parse_err(hl, format!("missing {what}")))?;
            t.parse().map_err(|_| parse_err(hl, format!("cannot parse {what} '{t}'")))
        };
        let n_rows = dim(ht.next(), "n_rows")?;
        let n_cols = dim(ht.next(), "n_cols")?;
        let p_star = match ht.next() {
            None => None,
            Some(t) if t.eq_ignore_ascii_case("none") => None,
            Some(t) => Some(parse_real(Some(t), hl, "p_star")?),
        };
        if ht.next().is_some() {
            return Err(parse_err(hl, "trailing tokens on header"));
        }

        #[derive(Clone, Copy, PartialEq)]
        enum Section {
            None,
            Aeq,
            Beq,
            L,
            U,
            C,
            XStar,
        }
        let mut section = Section::None;
        let mut seen: Vec<&str> = Vec::new();
        let mut a_eq = Vec::new();
        let mut vecs: [Vec<f64>; 5] = Default::default();
        for (ln, line) in lines {
            let keyword = match line {
                "Aeq" => Some(Section::Aeq),
                "beq" => Some(Section::Beq),
                "l" => Some(Section::L),
                "u" => Some(Section::U),
                "c" => Some(Section::C),
                "xstar" => Some(Section::XStar),
                _ => None,
            };
            if let Some(s) = keyword {
                if seen.contains(&line) {
                    return Err(parse_err(ln, format!("section '{line}' repeated")));
                }
                seen.push(line);
                section = s;
                continue;
            }
            let slot = match section {
                Section::None => return Err(parse_err(ln, "data before any section keyword")),
                Section::Aeq => {
                    let mut t = line.split_whitespace();
                    let i = parse_index(t.next(), ln, "row index", n_rows)?;
                    let j = parse_index(t.next(), ln, "column index", n_cols)?;
                    let v = parse_real(t.next(), ln, "value")?;
                    if t.next().is_some() {
                        return Err(parse_err(ln, "Aeq lines hold exactly 'i j value'"));
                    }
                    a_eq.push((i, j, v));
                    continue;
                }
                Section::Beq => 0,
                Section::L => 1,
                Section::U => 2,
                Section::C => 3,
                Section::XStar => 4,
            };
            for tok in line.split_whitespace() {
                let v = match tok.to_ascii_lowercase().as_str() {
                    "inf" | "+inf" | "infinity" => f64::INFINITY,
                    "-inf" | "-infinity" => f64::NEG_INFINITY,
                    _ => tok
                        .parse::<f64>()
                        .map_err(|_| parse_err(ln, format!("cannot parse value '{tok}'")))?,
                };
                vecs[slot].push(v);
            }
        }
        for required in ["beq", "l", "u", "c"] {
            if required == "beq" && n_rows == 0 {
                continue;
            }
            if !seen.contains(&required) {
                return Err(parse_err(hl, format!("missing section '{required}'")));
            }
        }
        let [b_eq, lower, upper, cost, xs] = vecs;
        let lp = LpInstance {
            n_rows,
            n_cols,
            a_eq,
            b_eq,
            lower,
            upper,
            cost,
            p_star,
            x_star: if seen.contains(&"xstar") { Some(xs) } else { None },
        };
        lp.validate()?;
        Ok(lp)
    }

    /// Writes the text format read by [`LpInstance::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        match self.p_star {
            Some(p) => writeln!(s, "lp {} {} {:e}", self.n_rows, self.n_cols, p),
            None => writeln!(s, "lp {} {}", self.n_rows, self.n_cols),
        }
        .expect("write to String");
        let fmt = |v: f64| {
            if v == f64::INFINITY {
                "inf".to_string()
            } else if v == f64::NEG_INFINITY {
                "-inf".to_string()
            } else {
                format!("{v:e}")
            }
        };
        s.push_str("Aeq\n");
        for &(i, j, v) in &self.a_eq {
            let _ = writeln!(s, "{} {} {:e}", i + 1, j + 1, v);
        }
        let mut vec_section = |name: &str, v: &[f64]| {
            let _ = writeln!(s, "{name}");
            let _ = writeln!(s, "{}", v.iter().map(|&x| fmt(x)).collect::<Vec<_>>().join(" "));
        };
        vec_section("beq", &self.b_eq);
        vec_section("l", &self.lower);
        vec_section("u", &self.upper);
        vec_section("c", &self.cost);
        if let Some(x) = &self.x_star {
            vec_section("xstar", x);
        }
        s
    }
}

/// Origin of a row in the stacked system `[A; -A; I; -I; c^T] x <= [b; -b; u; -l; p*]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StackRow {
    Equality(usize),
    NegatedEquality(usize),
    Upper(usize),
    Lower(usize),
    Cost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropReason {
    InfiniteBound,
    /// All-zero row; `consistent` says whether `0 <= rhs` holds.
    ZeroRow { consistent: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DroppedRow {
    pub origin: StackRow,
    pub reason: DropReason,
}

#[derive(Debug, Clone)]
pub struct LpFeasibility {
    pub problem: FeasibilityProblem,
    /// Origin of each kept row, in order.
    pub rows: Vec<StackRow>,
    pub dropped: Vec<DroppedRow>,
}

/// Stacks an LP into `A_stack x <= b_stack`, rows ordered `A_eq`, `-A_eq`,
/// `I`, `-I`, `c^T`. Rows for infinite bounds and all-zero rows are dropped and
/// reported.
pub fn lp_to_feasibility(lp: &LpInstance) -> Result<LpFeasibility, ProblemError> {
    lp.validate()?;
    let p_star = lp.p_star.ok_or(ProblemError::MissingOptimum)?;
    let n = lp.n_cols;

    // summed A_eq rows
    let (eq_ptr, eq_cols, eq_vals) = if lp.n_rows > 0 {
        linalg::triplets_to_csr(lp.n_rows, n, &lp.a_eq)?
    } else {
        (vec![0], Vec::new(), Vec::new())
    };
    let eq_row = |r: usize| {
        let (lo, hi) = (eq_ptr[r], eq_ptr[r + 1]);
        eq_cols[lo..hi]
            .iter()
            .zip(&eq_vals[lo..hi])
            .filter(|(_, v)| **v != 0.0)
            .map(|(&j, &v)| (j, v))
            .collect::<Vec<_>>()
    };

    let mut candidates: Vec<(StackRow, Vec<(usize, f64)>, f64)> = Vec::new();
    for r in 0..lp.n_rows {
        candidates.push((StackRow::Equality(r), eq_row(r), lp.b_eq[r]));
    }
    for r in 0..lp.n_rows {
        let row = eq_row(r).into_iter().map(|(j, v)| (j, -v)).collect();
        candidates.push((StackRow::NegatedEquality(r), row, -lp.b_eq[r]));
    }
    let mut dropped = Vec::new();
    for j in 0..n {
        if lp.upper[j].is_finite() {
            candidates.push((StackRow::Upper(j), vec![(j, 1.0)], lp.upper[j]));
        } else {
            dropped.push(DroppedRow {
                origin: StackRow::Upper(j),
                reason: DropReason::InfiniteBound,
            });
        }
    }
    for j in 0..n {
        if lp.lower[j].is_finite() {
            candidates.push((StackRow::Lower(j), vec![(j, -1.0)], -lp.lower[j]));
        } else {
            dropped.push(DroppedRow {
                origin: StackRow::Lower(j),
                reason: DropReason::InfiniteBound,
            });
        }
    }
    let cost: Vec<(usize, f64)> = lp
        .cost
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(j, &v)| (j, v))
        .collect();
    candidates.push((StackRow::Cost, cost, p_star));

    let mut row_ptr = vec![0usize];
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    let mut b = Vec::new();
    let mut rows = Vec::new();
    for (origin, entries, rhs) in candidates {
        if entries.is_empty() {
            dropped.push(DroppedRow {
                origin,
                reason: DropReason::ZeroRow {
                    consistent: rhs >= 0.0,
                },
            });
            continue;
        }
        for (j, v) in entries {
            col_idx.push(j);
            values.push(v);
        }
        row_ptr.push(col_idx.len());
        b.push(rhs);
        rows.push(origin);
    }
    if rows.is_empty() {
        return Err(ProblemError::InvalidLp("stacked system has no nonzero rows".into()));
    }
    let a = RowMatrix::from_csr(rows.len(), n, row_ptr, col_idx, values)?;
    let mut problem = FeasibilityProblem::new(
        a,
        b,
        Provenance::LpTransform {
            path: None,
            dropped_rows: dropped.len(),
        },
    )?;
    if let Some(x) = &lp.x_star {
        problem = problem.with_certificate(x.clone())?;
    }
    Ok(LpFeasibility {
        problem,
        rows,
        dropped,
    })
}

impl LpFeasibility {
    pub fn with_source(mut self, path: PathBuf) -> Self {
        self.problem.provenance = Provenance::LpTransform {
            path: Some(path),
            dropped_rows: self.dropped.len(),
        };
        self
    }
}
