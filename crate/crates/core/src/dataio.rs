//! SVMlight / LibSVM text parsing and synthetic binary classification data.
//!
//! Records look like `<label> <idx>:<val> <idx>:<val> ...` with 1-based,
//! strictly increasing indices. `#` starts a comment. Labels are normalized
//! to `-1` (anything `<= 0`) or `+1`.

use std::fmt::Write as _;
use std::io::BufRead;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}, column {column}: {kind} (`{token}`)")]
    Parse {
        line: usize,
        column: usize,
        token: String,
        kind: ParseErrorKind,
    },
    #[error("dataset has no records")]
    Empty,
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("label is not a number")]
    NonNumericLabel,
    #[error("feature index is not an integer")]
    NonIntegerIndex,
    #[error("feature index must be >= 1")]
    NonPositiveIndex,
    #[error("feature indices must be strictly increasing")]
    NonIncreasingIndex,
    #[error("malformed index:value pair")]
    MalformedPair,
}

/// A sparse feature vector with 0-based, strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRow {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseRow {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, v)| v * x[i as usize])
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn dense(&self, d: usize) -> Vec<f64> {
        let mut out = vec![0.0; d];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i as usize] = v;
        }
        out
    }
}

/// Binary classification data with labels in `{-1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    rows: Vec<SparseRow>,
    labels: Vec<f64>,
}

impl Dataset {
    /// Validates and builds a dataset. Labels are normalized to `+-1`.
    pub fn new(dim: usize, rows: Vec<SparseRow>, labels: Vec<f64>) -> Result<Self, DataError> {
        if rows.is_empty() {
            return Err(DataError::Empty);
        }
        if dim == 0 {
            return Err(DataError::Argument("dimension must be >= 1".into()));
        }
        if rows.len() != labels.len() {
            return Err(DataError::Argument(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        for (r, row) in rows.iter().enumerate() {
            if row.indices.len() != row.values.len()
                || row.indices.iter().any(|&i| i as usize >= dim)
                || row.indices.windows(2).any(|w| w[0] >= w[1])
                || row.values.iter().any(|v| !v.is_finite())
            {
                return Err(DataError::Argument(format!(
                    "row {r} is not a valid sparse row"
                )));
            }
        }
        let labels = labels.into_iter().map(normalize_label).collect();
        Ok(Self { dim, rows, labels })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &SparseRow {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Dense copy of row `i`.
    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        self.rows[i].dense(self.dim)
    }

    /// Largest Euclidean row norm.
    pub fn max_row_norm(&self) -> f64 {
        self.rows.iter().map(SparseRow::norm).fold(0.0, f64::max)
    }

    /// Serializes back to LibSVM text with 1-based indices.
    pub fn to_libsvm(&self) -> String {
        let mut out = String::new();
        for (row, &y) in self.rows.iter().zip(&self.labels) {
            out.push_str(if y > 0.0 { "+1" } else { "-1" });
            for (&i, &v) in row.indices.iter().zip(&row.values) {
                // `{:?}` prints the shortest repr that round-trips
                let _ = write!(out, " {}:{:?}", i + 1, v);
            }
            out.push('\n');
        }
        out
    }
}

fn normalize_label(y: f64) -> f64 {
    if y > 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Parses LibSVM text. The feature dimension is the largest index seen, or
/// `min_dim` when that is larger (for aligning separately parsed splits).
pub fn parse_libsvm<R: BufRead>(reader: R, min_dim: Option<usize>) -> Result<Dataset, DataError> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0usize;
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = line_no + 1;
        let content = match line.find('#') {
            Some(p) => &line[..p],
            None => &line,
        };
        let content = content.trim_end_matches('\r');
        let mut tokens = tokenize(content);
        let Some((label_col, label_tok)) = tokens.next() else {
            continue;
        };
        let label: f64 = match label_tok.parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ => {
                return Err(parse_err(
                    line_no,
                    label_col,
                    label_tok,
                    ParseErrorKind::NonNumericLabel,
                ))
            }
        };
        let mut row = SparseRow::default();
        let mut prev: i64 = 0;
        for (col, tok) in tokens {
            let Some((idx_s, val_s)) = tok.split_once(':') else {
                return Err(parse_err(line_no, col, tok, ParseErrorKind::MalformedPair));
            };
            let idx: i64 = idx_s
                .parse()
                .map_err(|_| parse_err(line_no, col, tok, ParseErrorKind::NonIntegerIndex))?;
            if idx <= 0 {
                return Err(parse_err(
                    line_no,
                    col,
                    tok,
                    ParseErrorKind::NonPositiveIndex,
                ));
            }
            if idx <= prev {
                return Err(parse_err(
                    line_no,
                    col,
                    tok,
                    ParseErrorKind::NonIncreasingIndex,
                ));
            }
            let val: f64 = match val_s.parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                _ => return Err(parse_err(line_no, col, tok, ParseErrorKind::MalformedPair)),
            };
            if idx > u32::MAX as i64 {
                return Err(parse_err(
                    line_no,
                    col,
                    tok,
                    ParseErrorKind::NonIntegerIndex,
                ));
            }
            prev = idx;
            max_index = max_index.max(idx as usize);
            row.indices.push((idx - 1) as u32);
            row.values.push(val);
        }
        rows.push(row);
        labels.push(label);
    }
    let dim = max_index.max(min_dim.unwrap_or(0)).max(1);
    Dataset::new(dim, rows, labels)
}

pub fn parse_libsvm_str(text: &str, min_dim: Option<usize>) -> Result<Dataset, DataError> {
    parse_libsvm(text.as_bytes(), min_dim)
}

pub fn read_libsvm_file(
    path: impl AsRef<std::path::Path>,
    min_dim: Option<usize>,
) -> Result<Dataset, DataError> {
    let file = std::fs::File::open(path)?;
    parse_libsvm(std::io::BufReader::new(file), min_dim)
}

/// Whitespace-separated tokens with their 1-based column.
fn tokenize(line: &str) -> impl Iterator<Item = (usize, &str)> {
    line.split_ascii_whitespace().map(move |tok| {
        let offset = tok.as_ptr() as usize - line.as_ptr() as usize;
        (line[..offset].chars().count() + 1, tok)
    })
}

fn parse_err(line: usize, column: usize, token: &str, kind: ParseErrorKind) -> DataError {
    DataError::Parse {
        line,
        column,
        token: token.to_string(),
        kind,
    }
}

/// Synthetic linearly generated labels: `w* ~ N(0, I)`, features
/// `a_i ~ N(0, I)`, `y_i = sign(a_i^T w*)` flipped independently with
/// probability `noise`. Rows are stored densely-populated in sparse form.
pub fn synth_logistic(n: usize, d: usize, seed: u64, noise: f64) -> Result<Dataset, DataError> {
    synth_logistic_with_truth(n, d, seed, noise).map(|(ds, _)| ds)
}

/// Like [`synth_logistic`] but also returns the generating weight vector.
pub fn synth_logistic_with_truth(
    n: usize,
    d: usize,
    seed: u64,
    noise: f64,
) -> Result<(Dataset, Vec<f64>), DataError> {
    if n == 0 || d == 0 {
        return Err(DataError::Argument("n and d must be >= 1".into()));
    }
    if !(0.0..0.5).contains(&noise) {
        return Err(DataError::Argument(format!(
            "noise {noise} outside [0, 0.5)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let a: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let margin: f64 = a.iter().zip(&w).map(|(x, y)| x * y).sum();
        let mut y = if margin >= 0.0 { 1.0 } else { -1.0 };
        let u: f64 = rand::Rng::random(&mut rng);
        if u < noise {
            y = -y;
        }
        rows.push(SparseRow {
            indices: (0..d as u32).collect(),
            values: a,
        });
        labels.push(y);
    }
    Ok((Dataset::new(d, rows, labels)?, w))
}

/// Uniform subset of `k` rows without replacement, kept in original order.
pub fn subsample(ds: &Dataset, k: usize, seed: u64) -> Result<Dataset, DataError> {
    if k == 0 || k > ds.n() {
        return Err(DataError::Argument(format!(
            "subsample size {k} outside [1, {}]",
            ds.n()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, ds.n(), k).into_vec();
    picked.sort_unstable();
    let rows = picked.iter().map(|&i| ds.rows[i].clone()).collect();
    let labels = picked.iter().map(|&i| ds.labels[i]).collect();
    Dataset::new(ds.dim, rows, labels)
}
