use serde::{Deserialize, Serialize};

use super::hessian::HessianPair;
use super::LandscapeError;
use crate::dynamics::{augmented, risk_gradient, FactorPair};
use crate::linalg::{cholesky_solve, svd, symmetric_eigen, DenseMatrix};
use crate::observation::IncompleteMatrix;

/// Orthonormal basis `Q` (d x k) of the leading right singular subspace of `W_aug`,
/// i.e. the shared span of the rows of A and the columns of B.
pub fn leading_span(theta: &FactorPair, k: usize) -> Result<DenseMatrix, LandscapeError> {
    let d = theta.d();
    let k = k.min(d);
    let s = svd(&augmented(theta))?;
    Ok(DenseMatrix::from_fn(d, k, |i, l| s.right_vectors[(i, l)]))
}

/// Linear map from reduced coordinates `(X, Y)` with `A = X Q^T`, `B = Q Y`
/// to the full parameter vector. Columns are orthonormal.
pub fn manifold_tangent_basis(q: &DenseMatrix) -> DenseMatrix {
    let d = q.rows();
    let k = q.cols();
    let mut p = DenseMatrix::zeros(2 * d * d, 2 * d * k);
    for i in 0..d {
        for l in 0..k {
            let col = i * k + l;
            for kk in 0..d {
                p[(i * d + kk, col)] = q[(kk, l)];
            }
        }
    }
    for l in 0..k {
        for j in 0..d {
            let col = d * k + l * d + j;
            for kk in 0..d {
                p[(d * d + j * d + kk, col)] = q[(kk, l)];
            }
        }
    }
    p
}

fn project_to_span(theta: &FactorPair, q: &DenseMatrix) -> FactorPair {
    let qqt = q.mul_transpose(q).expect("conformant");
    FactorPair {
        a: &theta.a * &qqt,
        b: &qqt * &theta.b,
    }
}

/// Result of polishing a plateau point into a critical point on its invariant manifold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Refinement {
    pub theta: FactorPair,
    pub rank: usize,
    pub span: DenseMatrix,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Projects `theta` onto the manifold spanned by the leading `k` directions
/// of `W_aug` and runs a Levenberg-Marquardt iteration on the gradient
/// within that manifold until `|grad R| <= tol`.
pub fn refine_critical_point(
    theta: &FactorPair,
    m: &IncompleteMatrix,
    k: usize,
    tol: f64,
) -> Result<Refinement, LandscapeError> {
    let q = leading_span(theta, k)?;
    let mut cur = project_to_span(theta, &q);
    let mut g = risk_gradient(&cur, m)?;
    let mut gn = g.norm();
    if q.cols() == 0 || gn <= tol {
        return Ok(Refinement {
            theta: cur,
            rank: q.cols(),
            span: q,
            grad_norm: gn,
            iterations: 0,
            converged: gn <= tol,
        });
    }
    let p = manifold_tangent_basis(&q);
    let d = m.d();
    let mut mu = gn;
    let mut iterations = 0;
    while iterations < 200 && gn > tol {
        iterations += 1;
        let h = HessianPair::compute(&cur, m)?.full();
        let hr = p.transpose_mul(&(&h * &p))?;
        let gr = p.transpose().mul_vec(&g.to_params());
        let h2 = hr.transpose_mul(&hr)?;
        let rhs: Vec<f64> = hr.transpose().mul_vec(&gr).iter().map(|x| -x).collect();
        let mut accepted = false;
        for _ in 0..40 {
            let mut lhs = h2.clone();
            for i in 0..lhs.rows() {
                lhs[(i, i)] += mu;
            }
            let step = cholesky_solve(&lhs, &rhs)?;
            let full_step = p.mul_vec(&step);
            let cand_params: Vec<f64> = cur
                .to_params()
                .iter()
                .zip(&full_step)
                .map(|(a, b)| a + b)
                .collect();
            let cand = FactorPair::from_params(d, &cand_params)?;
            let cg = risk_gradient(&cand, m)?;
            let cgn = cg.norm();
            if cgn.is_finite() && cgn < gn {
                cur = cand;
                g = cg;
                gn = cgn;
                mu = (mu * 0.1).max(1e-3 * gn * gn);
                accepted = true;
                break;
            }
            mu *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    Ok(Refinement {
        theta: cur,
        rank: q.cols(),
        span: q,
        grad_norm: gn,
        iterations,
        converged: gn <= tol,
    })
}

/// Second-order stationarity within the invariant manifold through `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestrictedCurvature {
    pub holds: bool,
    pub min_eigenvalue: f64,
}

/// Smallest eigenvalue of the Hessian restricted to the tangent directions
/// of the manifold with span `q`; holds when it is at least
/// `-tol * max(1, |H_restricted|)`.
pub fn assumption2_check(
    theta: &FactorPair,
    m: &IncompleteMatrix,
    q: &DenseMatrix,
    tol: f64,
) -> Result<RestrictedCurvature, LandscapeError> {
    if q.cols() == 0 {
        return Ok(RestrictedCurvature {
            holds: true,
            min_eigenvalue: 0.0,
        });
    }
    let p = manifold_tangent_basis(q);
    let h = HessianPair::compute(theta, m)?.full();
    let hr = p.transpose_mul(&(&h * &p))?;
    let hr = DenseMatrix::from_fn(hr.rows(), hr.cols(), |i, j| 0.5 * (hr[(i, j)] + hr[(j, i)]));
    let e = symmetric_eigen(&hr)?;
    let top = e.eigenvalues.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let min = *e.eigenvalues.last().unwrap_or(&0.0);
    Ok(RestrictedCurvature {
        holds: min >= -tol * top.max(1.0),
        min_eigenvalue: min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::manifold_membership;
    use crate::observation::ParseOptions;

    fn fig4() -> IncompleteMatrix {
        IncompleteMatrix::parse_text("1 * 3\n* 5 *\n3 * 9", ParseOptions::default()).unwrap()
    }

    fn perturbed_corner_point() -> FactorPair {
        let mut t = FactorPair::zeros(3);
        t.a[(0, 0)] = 1.0;
        t.a[(2, 0)] = 3.0;
        t.b[(0, 0)] = 1.0;
        t.b[(0, 2)] = 3.0;
        t.a[(0, 1)] = 1e-5;
        t.b[(1, 1)] = -2e-5;
        t.a[(2, 0)] += 1e-3;
        t
    }

    #[test]
    fn tangent_basis_is_orthonormal() {
        let q = crate::linalg::orthonormal_basis(&DenseMatrix::from_rows(&[
            [1.0, 0.0],
            [1.0, 1.0],
            [0.0, 2.0],
        ]))
        .unwrap();
        let p = manifold_tangent_basis(&q);
        let g = p.transpose_mul(&p).unwrap();
        assert!(g.max_abs_diff(&DenseMatrix::identity(12)) < 1e-14);
    }

    #[test]
    fn refines_corner_saddle() {
        let m = fig4();
        let r = refine_critical_point(&perturbed_corner_point(), &m, 1, 1e-10).unwrap();
        assert!(r.converged, "grad {}", r.grad_norm);
        let basis = vec![r.span.column(0)];
        assert!(manifold_membership(&r.theta, &basis, 1e-12).unwrap());
        let w = r.theta.output();
        for (i, j, v) in [(0, 0, 1.0), (0, 2, 3.0), (2, 0, 3.0), (2, 2, 9.0)] {
            assert!((w[(i, j)] - v).abs() < 1e-8);
        }
        let a2 = assumption2_check(&r.theta, &m, &r.span, 1e-6).unwrap();
        assert!(!a2.holds);
        assert!((a2.min_eigenvalue + 2.0).abs() < 1e-6);
    }

    #[test]
    fn origin_needs_no_iterations() {
        let m = fig4();
        let r = refine_critical_point(&FactorPair::zeros(3), &m, 0, 1e-12).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
    }
}
