//! Reader, writer, and preprocessing for the sparse `label idx:val …`
//! dataset format, with line/column-addressed parse errors.

use std::collections::BTreeSet;
use std::io::BufRead;

use ndarray::{Array1, Array2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A sparse binary-classification dataset: per-row `(index, value)` pairs
/// with 1-based, strictly increasing indices, and labels in `{−1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDataset {
    rows: Vec<Vec<(usize, f64)>>,
    labels: Vec<f64>,
    n_features: usize,
}

impl SparseDataset {
    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Dense feature matrix (missing entries are zero) and label vector.
    pub fn to_dense(&self) -> (Array2<f64>, Array1<f64>) {
        let mut features = Array2::zeros((self.rows.len(), self.n_features));
        for (i, row) in self.rows.iter().enumerate() {
            for (index, value) in row {
                features[(i, index - 1)] = *value;
            }
        }
        (features, Array1::from_vec(self.labels.clone()))
    }

    /// Serialize back to the text format. Whitespace is normalized; every
    /// `(index, value, label)` triple survives exactly (values print in
    /// shortest round-trip form).
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (row, label) in self.rows.iter().zip(self.labels.iter()) {
            out.push_str(&format!("{label}"));
            for (index, value) in row {
                out.push_str(&format!(" {index}:{value}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Scale each column of a dense feature matrix affinely onto `[−1, 1]`
/// using its own minimum and maximum; constant columns map to zero.
pub fn scale_columns_to_unit(features: &mut Array2<f64>) {
    let (m, n) = features.dim();
    for j in 0..n {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..m {
            lo = lo.min(features[(i, j)]);
            hi = hi.max(features[(i, j)]);
        }
        if hi - lo <= 0.0 {
            for i in 0..m {
                features[(i, j)] = 0.0;
            }
        } else {
            for i in 0..m {
                let t = (features[(i, j)] - lo) / (hi - lo);
                features[(i, j)] = 2.0 * t - 1.0;
            }
        }
    }
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> DataError {
    DataError::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Parse the sparse text format. Blank lines and `#` comments (whole-line
/// or trailing) are ignored. Raw labels that already read as `±1` are kept;
/// otherwise the two distinct raw labels are mapped by lexicographic order,
/// smaller to `−1`.
pub fn parse_libsvm(reader: impl BufRead) -> Result<SparseDataset, DataError> {
    struct RawRow {
        label: String,
        pairs: Vec<(usize, f64)>,
    }
    let mut raw_rows: Vec<RawRow> = Vec::new();

    for (line_index, line) in reader.lines().enumerate() {
        let line_no = line_index + 1;
        let line = line?;
        let content = match line.find('#') {
            Some(pos) => &line[..pos],
            None => &line[..],
        };
        if content.trim().is_empty() {
            continue;
        }

        // Track 1-based column positions of whitespace-separated tokens.
        let mut tokens: Vec<(usize, &str)> = Vec::new();
        let mut offset = 0usize;
        for piece in content.split_whitespace() {
            let found = content[offset..]
                .find(piece)
                .expect("split_whitespace pieces occur in the line")
                + offset;
            tokens.push((found + 1, piece));
            offset = found + piece.len();
        }

        let (label_col, label_tok) = tokens[0];
        if label_tok.parse::<f64>().is_err() {
            return Err(parse_err(
                line_no,
                label_col,
                format!("label `{label_tok}` is not a number"),
            ));
        }
        let mut pairs = Vec::with_capacity(tokens.len() - 1);
        let mut last_index = 0usize;
        for &(col, tok) in &tokens[1..] {
            let Some((idx_str, val_str)) = tok.split_once(':') else {
                return Err(parse_err(
                    line_no,
                    col,
                    format!("expected `index:value`, got `{tok}`"),
                ));
            };
            let index: usize = idx_str.parse().map_err(|_| {
                parse_err(line_no, col, format!("feature index `{idx_str}` is not a positive integer"))
            })?;
            if index == 0 {
                return Err(parse_err(line_no, col, "feature indices are 1-based"));
            }
            if index <= last_index {
                return Err(parse_err(
                    line_no,
                    col,
                    format!("feature index {index} does not increase (previous was {last_index})"),
                ));
            }
            let value: f64 = val_str.parse().map_err(|_| {
                parse_err(
                    line_no,
                    col + idx_str.len() + 1,
                    format!("feature value `{val_str}` is not a number"),
                )
            })?;
            if !value.is_finite() {
                return Err(parse_err(
                    line_no,
                    col + idx_str.len() + 1,
                    format!("feature value `{val_str}` is not finite"),
                ));
            }
            last_index = index;
            pairs.push((index, value));
        }
        raw_rows.push(RawRow {
            label: label_tok.to_string(),
            pairs,
        });
    }

    let distinct: BTreeSet<&str> = raw_rows.iter().map(|r| r.label.as_str()).collect();
    if distinct.len() > 2 {
        return Err(DataError::Invalid(format!(
            "binary labels expected, found {} distinct values",
            distinct.len()
        )));
    }
    let already_signed = raw_rows
        .iter()
        .all(|r| matches!(r.label.parse::<f64>(), Ok(v) if v == 1.0 || v == -1.0));
    let labels: Vec<f64> = if already_signed {
        raw_rows
            .iter()
            .map(|r| r.label.parse::<f64>().expect("checked above"))
            .collect()
    } else {
        // Lexicographically smaller raw label becomes −1.
        let smallest = distinct.iter().next().copied().unwrap_or("");
        raw_rows
            .iter()
            .map(|r| if r.label == smallest { -1.0 } else { 1.0 })
            .collect()
    };

    let n_features = raw_rows
        .iter()
        .flat_map(|r| r.pairs.iter().map(|(i, _)| *i))
        .max()
        .unwrap_or(0);
    Ok(SparseDataset {
        rows: raw_rows.into_iter().map(|r| r.pairs).collect(),
        labels,
        n_features,
    })
}
