use serde::{Deserialize, Serialize};

use super::{dot, DenseMatrix, LinalgError};

const MAX_SWEEPS: usize = 80;

/// Thin SVD `m = U diag(s) V^T` with `k = min(rows, cols)` columns in U and V.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvdResult {
    pub left_vectors: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub right_vectors: DenseMatrix,
}

impl SvdResult {
    pub fn u(&self, k: usize) -> Vec<f64> {
        self.left_vectors.column(k)
    }

    pub fn v(&self, k: usize) -> Vec<f64> {
        self.right_vectors.column(k)
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let us = DenseMatrix::from_fn(
            self.left_vectors.rows(),
            self.singular_values.len(),
            |i, j| self.left_vectors[(i, j)] * self.singular_values[j],
        );
        us.mul_transpose(&self.right_vectors)
            .expect("svd factors are conformant")
    }

    /// Best rank-`k` approximation from the leading triples.
    pub fn truncate(&self, k: usize) -> DenseMatrix {
        let k = k.min(self.singular_values.len());
        let (m, n) = (self.left_vectors.rows(), self.right_vectors.rows());
        DenseMatrix::from_fn(m, n, |i, j| {
            (0..k)
                .map(|t| {
                    self.left_vectors[(i, t)] * self.singular_values[t] * self.right_vectors[(j, t)]
                })
                .sum()
        })
    }
}

/// One-sided Jacobi (Hestenes) SVD with a fixed cyclic sweep order.
pub fn svd(m: &DenseMatrix) -> Result<SvdResult, LinalgError> {
    m.ensure_finite()?;
    if m.rows() < m.cols() {
        let t = svd_tall(&m.transpose());
        let mut out = SvdResult {
            left_vectors: t.right_vectors,
            singular_values: t.singular_values,
            right_vectors: t.left_vectors,
        };
        fix_signs(&mut out);
        return Ok(out);
    }
    let mut out = svd_tall(m);
    fix_signs(&mut out);
    Ok(out)
}

pub fn singular_values(m: &DenseMatrix) -> Result<Vec<f64>, LinalgError> {
    Ok(svd(m)?.singular_values)
}

fn svd_tall(m: &DenseMatrix) -> SvdResult {
    let (rows, cols) = m.shape();
    // Columns stored contiguously for the rotations.
    let mut u: Vec<Vec<f64>> = (0..cols).map(|j| m.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..cols)
        .map(|j| {
            let mut e = vec![0.0; cols];
            e[j] = 1.0;
            e
        })
        .collect();

    let eps = f64::EPSILON;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let alpha = dot(&u[p], &u[p]);
                let beta = dot(&u[q], &u[q]);
                let gamma = dot(&u[p], &u[q]);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut u, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let sig: Vec<f64> = u.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| sig[b].total_cmp(&sig[a]).then(a.cmp(&b)));

    let tiny = f64::MIN_POSITIVE * 1e8;
    let mut left: Vec<Vec<f64>> = Vec::with_capacity(cols);
    let mut right: Vec<Vec<f64>> = Vec::with_capacity(cols);
    let mut values = Vec::with_capacity(cols);
    let mut missing = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        let s = sig[j];
        if s > tiny {
            left.push(u[j].iter().map(|x| x / s).collect());
            values.push(s);
        } else {
            left.push(vec![0.0; rows]);
            values.push(0.0);
            missing.push(slot);
        }
        right.push(v[j].clone());
    }
    complete_orthonormal(&mut left, &missing, rows);

    SvdResult {
        left_vectors: DenseMatrix::from_columns(&left),
        singular_values: values,
        right_vectors: DenseMatrix::from_columns(&right),
    }
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (a, b) = (&mut lo[p], &mut hi[0]);
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Fills the zero columns listed in `missing` with unit vectors orthogonal to
/// every other column, drawing candidates from the standard basis.
fn complete_orthonormal(cols: &mut [Vec<f64>], missing: &[usize], dim: usize) {
    let mut candidate = 0;
    for &slot in missing {
        while candidate < dim {
            let mut w = vec![0.0; dim];
            w[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for (k, c) in cols.iter().enumerate() {
                    if k == slot {
                        continue;
                    }
                    let proj = dot(&w, c);
                    for (wi, ci) in w.iter_mut().zip(c) {
                        *wi -= proj * ci;
                    }
                }
            }
            let n = dot(&w, &w).sqrt();
            if n > 1e-8 {
                cols[slot] = w.iter().map(|x| x / n).collect();
                break;
            }
        }
    }
}

fn first_nonzero_sign(v: &[f64]) -> f64 {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    v.iter()
        .find(|x| x.abs() > 1e-12 * scale)
        .map_or(1.0, |x| x.signum())
}

fn fix_signs(s: &mut SvdResult) {
    for k in 0..s.singular_values.len() {
        let u = s.left_vectors.column(k);
        if first_nonzero_sign(&u) < 0.0 {
            for i in 0..s.left_vectors.rows() {
                s.left_vectors[(i, k)] = -s.left_vectors[(i, k)];
            }
            for i in 0..s.right_vectors.rows() {
                s.right_vectors[(i, k)] = -s.right_vectors[(i, k)];
            }
        }
    }
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending, eigenvectors as columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymmetricEigen {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DenseMatrix,
}

/// Cyclic Jacobi eigendecomposition.
///
/// Rejects input whose relative asymmetry exceeds 1e-10; the strict lower
/// triangle is then mirrored from the upper one.
pub fn symmetric_eigen(h: &DenseMatrix) -> Result<SymmetricEigen, LinalgError> {
    if !h.is_square() {
        return Err(LinalgError::NotSquare(h.rows(), h.cols()));
    }
    h.ensure_finite()?;
    let asym = h.asymmetry();
    if asym > 1e-10 {
        return Err(LinalgError::Asymmetric(asym));
    }
    let n = h.rows();
    let mut a = DenseMatrix::from_fn(n, n, |i, j| if i <= j { h[(i, j)] } else { h[(j, i)] });
    let mut v = DenseMatrix::identity(n);

    let scale = a.frobenius_norm();
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                if apq.abs() <= 1e-3 * f64::EPSILON * scale / n as f64 {
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(y, y)].total_cmp(&a[(x, x)]).then(x.cmp(&y)));
    let eigenvalues = order.iter().map(|&k| a[(k, k)]).collect();
    let mut vecs = DenseMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    for j in 0..n {
        let col = vecs.column(j);
        if first_nonzero_sign(&col) < 0.0 {
            for i in 0..n {
                vecs[(i, j)] = -vecs[(i, j)];
            }
        }
    }
    Ok(SymmetricEigen {
        eigenvalues,
        eigenvectors: vecs,
    })
}
