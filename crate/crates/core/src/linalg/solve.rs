use super::{symmetric_eigen, DenseMatrix, LinalgError};

/// Solves `a x = b` for symmetric positive definite `a` via Cholesky.
pub fn cholesky_solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare(a.rows(), a.cols()));
    }
    let n = a.rows();
    if b.len() != n {
        return Err(LinalgError::ShapeMismatch {
            expected: (n, 1),
            found: (b.len(), 1),
        });
    }
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite);
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    Ok(x)
}

/// Minimizes `|x c - b|^2 + ridge |c|^2` through the normal equations.
pub fn ridge_least_squares(
    x: &DenseMatrix,
    b: &[f64],
    ridge: f64,
) -> Result<Vec<f64>, LinalgError> {
    let mut g = x.transpose_mul(x)?;
    let scale = (0..g.rows())
        .map(|i| g[(i, i)])
        .fold(0.0, f64::max)
        .max(1.0);
    for i in 0..g.rows() {
        g[(i, i)] += ridge * scale;
    }
    let rhs: Vec<f64> = (0..x.cols())
        .map(|j| (0..x.rows()).map(|i| x[(i, j)] * b[i]).sum())
        .collect();
    cholesky_solve(&g, &rhs)
}

/// Moore-Penrose inverse of a symmetric matrix, discarding eigenvalues below
/// `rel_tol` times the largest magnitude.
pub fn pseudo_inverse_symmetric(h: &DenseMatrix, rel_tol: f64) -> Result<DenseMatrix, LinalgError> {
    let e = symmetric_eigen(h)?;
    let n = h.rows();
    let top = e.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let cut = rel_tol * top;
    let mut out = DenseMatrix::zeros(n, n);
    for (k, &lam) in e.eigenvalues.iter().enumerate() {
        if lam.abs() <= cut || lam == 0.0 {
            continue;
        }
        let v = e.eigenvectors.column(k);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += v[i] * v[j] / lam;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_small() {
        let a = DenseMatrix::from_rows(&[[4.0, 2.0], [2.0, 3.0]]);
        let x = cholesky_solve(&a, &[2.0, 1.0]).unwrap();
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0).abs() < 1e-14);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0).abs() < 1e-14);
        let bad = DenseMatrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]);
        assert_eq!(
            cholesky_solve(&bad, &[1.0, 1.0]),
            Err(LinalgError::NotPositiveDefinite)
        );
    }

    #[test]
    fn least_squares_exact_line() {
        let x = DenseMatrix::from_rows(&[[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]]);
        let c = ridge_least_squares(&x, &[1.0, 3.0, 5.0], 1e-14).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-9 && (c[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn pinv_of_singular() {
        let h = DenseMatrix::from_diagonal(&[2.0, 0.0, -4.0]);
        let p = pseudo_inverse_symmetric(&h, 1e-12).unwrap();
        assert!(p.max_abs_diff(&DenseMatrix::from_diagonal(&[0.5, 0.0, -0.25])) < 1e-15);
    }
}
