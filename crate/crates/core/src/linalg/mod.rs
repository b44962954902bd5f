//! Dense small-matrix linear algebra.
//!
//! Everything here is written for matrices with a side of at most a few
//! hundred: one-sided Jacobi SVD, cyclic Jacobi for symmetric matrices,
//! Gram-Schmidt bases and a handful of norms.

mod decomp;
mod matrix;
mod solve;
mod subspace;

pub use decomp::{singular_values, svd, symmetric_eigen, SvdResult, SymmetricEigen};
pub use matrix::{dot, norm, normalized, DenseMatrix};
pub use solve::{cholesky_solve, pseudo_inverse_symmetric, ridge_least_squares};
pub use subspace::{orthonormal_basis, principal_angles, project_onto_span, span_residual};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("matrix is not symmetric (relative asymmetry {0:.3e})")]
    Asymmetric(f64),
    #[error("basis is rank deficient: column {column} depends on the previous ones")]
    RankDeficient { column: usize },
    #[error("mask entry ({row}, {col}) is {value}, expected 0 or 1")]
    NonBinaryMask { row: usize, col: usize, value: f64 },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("invalid rank policy: thresholds must be strictly positive and finite")]
    InvalidPolicy,
}

/// Threshold rule for counting "significantly nonzero" singular values.
///
/// A singular value counts when it is strictly greater than
/// `max(relative_threshold * sigma_1, absolute_threshold)`, so values sitting
/// exactly on the threshold resolve downward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankPolicy {
    pub relative_threshold: f64,
    pub absolute_threshold: f64,
}

impl Default for RankPolicy {
    fn default() -> Self {
        RankPolicy {
            relative_threshold: 1e-4,
            absolute_threshold: 1e-8,
        }
    }
}

impl RankPolicy {
    pub fn new(relative_threshold: f64, absolute_threshold: f64) -> Result<Self, LinalgError> {
        let p = RankPolicy {
            relative_threshold,
            absolute_threshold,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), LinalgError> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if ok(self.relative_threshold) && ok(self.absolute_threshold) {
            Ok(())
        } else {
            Err(LinalgError::InvalidPolicy)
        }
    }

    pub fn cutoff(&self, sigma_max: f64) -> f64 {
        (self.relative_threshold * sigma_max).max(self.absolute_threshold)
    }

    /// Rank of an already computed, descending singular value list.
    pub fn rank_of(&self, singular_values: &[f64]) -> usize {
        let Some(&s1) = singular_values.first() else {
            return 0;
        };
        let cut = self.cutoff(s1);
        singular_values.iter().take_while(|&&s| s > cut).count()
    }
}

pub fn nuclear_norm(m: &DenseMatrix) -> Result<f64, LinalgError> {
    Ok(singular_values(m)?.iter().sum())
}

pub fn numerical_rank(m: &DenseMatrix, policy: &RankPolicy) -> Result<usize, LinalgError> {
    policy.validate()?;
    Ok(policy.rank_of(&singular_values(m)?))
}

/// Checks that every entry of `mask` is exactly 0 or 1.
pub fn ensure_binary(mask: &DenseMatrix) -> Result<(), LinalgError> {
    for i in 0..mask.rows() {
        for j in 0..mask.cols() {
            let v = mask[(i, j)];
            if v != 0.0 && v != 1.0 {
                return Err(LinalgError::NonBinaryMask {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
    }
    Ok(())
}

/// Frobenius norm over the entries where `mask` is one.
pub fn masked_frobenius(m: &DenseMatrix, mask: &DenseMatrix) -> Result<f64, LinalgError> {
    m.check_same_shape(mask)?;
    ensure_binary(mask)?;
    Ok(m.as_slice()
        .iter()
        .zip(mask.as_slice())
        .filter(|(_, &p)| p == 1.0)
        .map(|(x, _)| x * x)
        .sum::<f64>()
        .sqrt())
}
