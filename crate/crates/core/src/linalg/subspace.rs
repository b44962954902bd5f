use std::f64::consts::FRAC_PI_2;

use super::{dot, svd, DenseMatrix, LinalgError};

/// Orthonormal basis of the column space via twice-iterated modified
/// Gram-Schmidt. A column whose residual falls below `1e-10` of its original
/// norm is reported as dependent.
pub fn orthonormal_basis(basis: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    basis.ensure_finite()?;
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(basis.cols());
    for j in 0..basis.cols() {
        let mut w = basis.column(j);
        let n0 = dot(&w, &w).sqrt();
        for _ in 0..2 {
            for c in &q {
                let p = dot(&w, c);
                for (wi, ci) in w.iter_mut().zip(c) {
                    *wi -= p * ci;
                }
            }
        }
        let n = dot(&w, &w).sqrt();
        if n0 == 0.0 || n <= 1e-10 * n0 {
            return Err(LinalgError::RankDeficient { column: j });
        }
        q.push(w.iter().map(|x| x / n).collect());
    }
    if q.is_empty() {
        return Ok(DenseMatrix::zeros(basis.rows(), 0));
    }
    Ok(DenseMatrix::from_columns(&q))
}

/// Principal angles between the column spaces of two bases, ascending.
///
/// Small angles come from sines and large ones from cosines, so both ends of
/// `[0, pi/2]` are resolved to roughly machine precision.
pub fn principal_angles(
    basis_a: &DenseMatrix,
    basis_b: &DenseMatrix,
) -> Result<Vec<f64>, LinalgError> {
    if basis_a.rows() != basis_b.rows() {
        return Err(LinalgError::ShapeMismatch {
            expected: (basis_a.rows(), basis_b.cols()),
            found: basis_b.shape(),
        });
    }
    let mut qa = orthonormal_basis(basis_a)?;
    let mut qb = orthonormal_basis(basis_b)?;
    if qa.cols() < qb.cols() {
        std::mem::swap(&mut qa, &mut qb);
    }
    let k = qb.cols();
    if k == 0 {
        return Ok(Vec::new());
    }
    let cosines = svd(&qa.transpose_mul(&qb)?)?.singular_values;
    let proj = qa.mul_unchecked(&qa.transpose_mul(&qb)?);
    let perp = &qb - &proj;
    let mut sines = svd(&perp)?.singular_values;
    sines.reverse();
    Ok((0..k)
        .map(|i| {
            let c = cosines[i].clamp(0.0, 1.0);
            if c * c < 0.5 {
                c.acos()
            } else {
                sines[i].clamp(0.0, 1.0).asin()
            }
            .clamp(0.0, FRAC_PI_2)
        })
        .collect())
}

/// Orthogonal projection of `v` onto the span of orthonormal columns `q`.
pub fn project_onto_span(q: &DenseMatrix, v: &[f64]) -> Vec<f64> {
    let coeffs: Vec<f64> = (0..q.cols()).map(|k| dot(&q.column(k), v)).collect();
    (0..q.rows())
        .map(|i| (0..q.cols()).map(|k| q[(i, k)] * coeffs[k]).sum())
        .collect()
}

/// Norm of the component of `v` orthogonal to the span of orthonormal columns `q`.
pub fn span_residual(q: &DenseMatrix, v: &[f64]) -> f64 {
    let p = project_onto_span(q, v);
    v.iter()
        .zip(&p)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}
