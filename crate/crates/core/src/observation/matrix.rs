use std::fmt;

use serde::{Deserialize, Serialize};

use super::ObservationError;
use crate::linalg::{ensure_binary, DenseMatrix};

/// Switches for the text and JSON readers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Accept observed zeros instead of rejecting them.
    pub allow_zero_observations: bool,
}

/// Observed values together with the binary observation mask `P`.
///
/// Unobserved slots of `values` are stored as zero and never read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncompleteMatrix {
    d: usize,
    values: DenseMatrix,
    mask: DenseMatrix,
}

#[derive(Serialize, Deserialize)]
struct JsonForm {
    d: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl IncompleteMatrix {
    /// Validates and builds an instance; unobserved values are zeroed.
    pub fn new(values: DenseMatrix, mask: DenseMatrix) -> Result<Self, ObservationError> {
        Self::with_options(values, mask, ParseOptions::default())
    }

    pub fn with_options(
        values: DenseMatrix,
        mask: DenseMatrix,
        opts: ParseOptions,
    ) -> Result<Self, ObservationError> {
        if !values.is_square() {
            return Err(ObservationError::NotSquare {
                rows: values.rows(),
                cols: values.cols(),
            });
        }
        values.check_same_shape(&mask)?;
        ensure_binary(&mask)?;
        let d = values.rows();
        let mut clean = DenseMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                if mask[(i, j)] == 1.0 {
                    let v = values[(i, j)];
                    if !v.is_finite() {
                        return Err(ObservationError::NonFiniteObservation { row: i, col: j });
                    }
                    if v == 0.0 && !opts.allow_zero_observations {
                        return Err(ObservationError::ZeroObservation { row: i, col: j });
                    }
                    clean[(i, j)] = v;
                }
            }
        }
        Ok(IncompleteMatrix {
            d,
            values: clean,
            mask,
        })
    }

    /// Builds from `(row, col, value)` triples with 0-based indices.
    pub fn from_entries(
        d: usize,
        entries: &[(usize, usize, f64)],
        opts: ParseOptions,
    ) -> Result<Self, ObservationError> {
        let mut values = DenseMatrix::zeros(d, d);
        let mut mask = DenseMatrix::zeros(d, d);
        for &(i, j, v) in entries {
            if i >= d || j >= d {
                return Err(ObservationError::OutOfRange { row: i, col: j, d });
            }
            if mask[(i, j)] == 1.0 {
                return Err(ObservationError::Duplicate { row: i, col: j });
            }
            mask[(i, j)] = 1.0;
            values[(i, j)] = v;
        }
        Self::with_options(values, mask, opts)
    }

    /// Fully observed instance.
    pub fn fully_observed(values: DenseMatrix) -> Result<Self, ObservationError> {
        let mask = DenseMatrix::from_fn(values.rows(), values.cols(), |_, _| 1.0);
        Self::new(values, mask)
    }

    /// Parses rows such as `1, 2, *` where `*` marks an unobserved entry.
    pub fn parse_text(src: &str, opts: ParseOptions) -> Result<Self, ObservationError> {
        let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
        let mut first_line = Vec::new();
        for (lineno, raw) in src.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut row = Vec::new();
            for tok in line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
            {
                if tok == "*" {
                    row.push(None);
                } else {
                    let v: f64 = tok.parse().map_err(|_| ObservationError::Parse {
                        line: lineno + 1,
                        message: format!("cannot parse `{tok}` as a number"),
                    })?;
                    row.push(Some(v));
                }
            }
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(ObservationError::Parse {
                        line: lineno + 1,
                        message: format!(
                            "row has {} entries, expected {} (from line {})",
                            row.len(),
                            first.len(),
                            first_line[0]
                        ),
                    });
                }
            }
            first_line.push(lineno + 1);
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(ObservationError::Parse {
                line: 0,
                message: "no matrix rows found".into(),
            });
        }
        let d = rows.len();
        if rows[0].len() != d {
            return Err(ObservationError::NotSquare {
                rows: d,
                cols: rows[0].len(),
            });
        }
        let mut entries = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if let Some(v) = v {
                    entries.push((i, j, *v));
                }
            }
        }
        Self::from_entries(d, &entries, opts)
    }

    /// Parses `{"d": int, "entries": [[row, col, value], ...]}` with 0-based indices.
    pub fn parse_json(src: &str, opts: ParseOptions) -> Result<Self, ObservationError> {
        let j: JsonForm =
            serde_json::from_str(src).map_err(|e| ObservationError::Json(e.to_string()))?;
        Self::from_entries(j.d, &j.entries, opts)
    }

    /// Dispatches on the first non-blank character: `{` selects JSON.
    pub fn parse_auto(src: &str, opts: ParseOptions) -> Result<Self, ObservationError> {
        if src.trim_start().starts_with('{') {
            Self::parse_json(src, opts)
        } else {
            Self::parse_text(src, opts)
        }
    }

    pub fn to_json(&self) -> String {
        let form = JsonForm {
            d: self.d,
            entries: self.observed(),
        };
        serde_json::to_string(&form).expect("plain data serializes")
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn mask(&self) -> &DenseMatrix {
        &self.mask
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask[(i, j)] == 1.0
    }

    /// Number of observed entries `n`.
    pub fn n(&self) -> usize {
        self.mask.as_slice().iter().filter(|&&p| p == 1.0).count()
    }

    /// Observed `(row, col, value)` triples in row-major order.
    pub fn observed(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.d {
            for j in 0..self.d {
                if self.is_observed(i, j) {
                    out.push((i, j, self.values[(i, j)]));
                }
            }
        }
        out
    }

    /// Entries of `w` on the mask, zero elsewhere.
    pub fn project(&self, w: &DenseMatrix) -> DenseMatrix {
        w.hadamard(&self.mask)
            .expect("caller passes a d x d matrix")
    }

    /// Largest absolute observed value.
    pub fn max_abs_observed(&self) -> f64 {
        self.values.max_abs()
    }

    /// Frobenius norm of the observed values.
    pub fn observed_norm(&self) -> f64 {
        self.values.frobenius_norm()
    }

    pub fn is_fully_observed(&self) -> bool {
        self.n() == self.d * self.d
    }

    /// Rows with no observation.
    pub fn isolated_rows(&self) -> Vec<usize> {
        (0..self.d)
            .filter(|&i| (0..self.d).all(|j| !self.is_observed(i, j)))
            .collect()
    }

    /// Columns with no observation.
    pub fn isolated_cols(&self) -> Vec<usize> {
        (0..self.d)
            .filter(|&j| (0..self.d).all(|i| !self.is_observed(i, j)))
            .collect()
    }

    /// Largest deviation from the observations, `max |w_ij - m_ij|` over the mask.
    pub fn max_observed_deviation(&self, w: &DenseMatrix) -> f64 {
        self.observed()
            .iter()
            .fold(0.0, |m, &(i, j, v)| m.max((w[(i, j)] - v).abs()))
    }
}

impl fmt::Display for IncompleteMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.d {
            let row: Vec<String> = (0..self.d)
                .map(|j| {
                    if self.is_observed(i, j) {
                        format!("{}", self.values[(i, j)])
                    } else {
                        "*".to_string()
                    }
                })
                .collect();
            writeln!(f, "{}", row.join(", "))?;
        }
        Ok(())
    }
}
