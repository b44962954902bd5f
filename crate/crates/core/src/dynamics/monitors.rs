use serde::{Deserialize, Serialize};

use super::{augmented, DynamicsError, FactorPair};
use crate::linalg::{
    norm, orthonormal_basis, principal_angles, span_residual, svd, DenseMatrix, RankPolicy,
};
use crate::observation::Component;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HimtStatus {
    pub holds: bool,
    /// `(rank A, rank B^T, rank W_aug)`.
    pub ranks: (usize, usize, usize),
    /// Largest principal angle between the leading row space of A and column space of B.
    pub max_angle: f64,
}

/// Checks `rank A = rank B^T = rank W_aug` and the alignment of `row(A)` with `col(B)`.
pub fn himt_check(
    theta: &FactorPair,
    policy: &RankPolicy,
    angle_tol: f64,
) -> Result<HimtStatus, DynamicsError> {
    policy.validate()?;
    let sa = svd(&theta.a)?;
    let sb = svd(&theta.b)?;
    let ra = policy.rank_of(&sa.singular_values);
    let rb = policy.rank_of(&sb.singular_values);
    let rw = policy.rank_of(&svd(&augmented(theta))?.singular_values);
    let r = ra.min(rb);
    let max_angle = if r == 0 {
        0.0
    } else {
        let d = theta.d();
        let row_a = DenseMatrix::from_fn(d, r, |i, k| sa.right_vectors[(i, k)]);
        let col_b = DenseMatrix::from_fn(d, r, |i, k| sb.left_vectors[(i, k)]);
        principal_angles(&row_a, &col_b)?
            .into_iter()
            .fold(0.0, f64::max)
    };
    Ok(HimtStatus {
        holds: ra == rb && rb == rw && max_angle <= angle_tol,
        ranks: (ra, rb, rw),
        max_angle,
    })
}

fn basis_matrix(d: usize, basis: &[Vec<f64>]) -> Result<DenseMatrix, DynamicsError> {
    if basis.iter().any(|b| b.len() != d) {
        return Err(DynamicsError::Shape(format!(
            "basis vectors must have length {d}"
        )));
    }
    if basis.is_empty() {
        return Ok(DenseMatrix::zeros(d, 0));
    }
    Ok(orthonormal_basis(&DenseMatrix::from_columns(basis))?)
}

fn in_span(q: &DenseMatrix, v: &[f64], tol: f64) -> bool {
    let n = norm(v);
    n == 0.0 || span_residual(q, v) <= tol * n
}

/// Every row of A and column of B lies in `span(basis)`, relative to its own norm.
pub fn manifold_membership(
    theta: &FactorPair,
    basis: &[Vec<f64>],
    tol: f64,
) -> Result<bool, DynamicsError> {
    let d = theta.d();
    let q = basis_matrix(d, basis)?;
    let rows_ok = (0..d).all(|i| in_span(&q, theta.a.row(i), tol));
    let cols_ok = (0..d).all(|j| in_span(&q, &theta.b.column(j), tol));
    Ok(rows_ok && cols_ok)
}

/// Membership in the component-restricted manifold: rows of A in the
/// component's rows and columns of B in its columns lie in the span; all
/// other rows and columns have norm at most `tol`.
pub fn sub_manifold_membership(
    theta: &FactorPair,
    comp: &Component,
    basis: &[Vec<f64>],
    tol: f64,
) -> Result<bool, DynamicsError> {
    let d = theta.d();
    let q = basis_matrix(d, basis)?;
    for i in 0..d {
        let row = theta.a.row(i);
        let ok = if comp.rows.contains(&i) {
            in_span(&q, row, tol)
        } else {
            norm(row) <= tol
        };
        if !ok {
            return Ok(false);
        }
    }
    for j in 0..d {
        let col = theta.b.column(j);
        let ok = if comp.cols.contains(&j) {
            in_span(&q, &col, tol)
        } else {
            norm(&col) <= tol
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}
