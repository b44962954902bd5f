use serde::{Deserialize, Serialize};

use crate::dynamics::{residual_matrix, DynamicsError, FactorPair};
use crate::linalg::{svd, DenseMatrix, LinalgError};
use crate::observation::IncompleteMatrix;

/// Gauss-Newton and residual-curvature parts of the Hessian of the masked risk.
///
/// Parameters are ordered as in [`FactorPair::to_params`]: rows of A, then
/// columns of B.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HessianPair {
    pub h1: DenseMatrix,
    pub h2: DenseMatrix,
}

impl HessianPair {
    pub fn compute(theta: &FactorPair, m: &IncompleteMatrix) -> Result<Self, DynamicsError> {
        Ok(HessianPair {
            h1: hessian_first_term(theta, m)?,
            h2: hessian_second_term(theta, m)?,
        })
    }

    pub fn full(&self) -> DenseMatrix {
        &self.h1 + &self.h2
    }
}

#[inline]
fn a_index(d: usize, i: usize, k: usize) -> usize {
    i * d + k
}

#[inline]
fn b_index(d: usize, k: usize, j: usize) -> usize {
    d * d + j * d + k
}

/// `(2/n) [[0, dM (x) I], [dM^T (x) I, 0]]`.
pub fn hessian_second_term(
    theta: &FactorPair,
    m: &IncompleteMatrix,
) -> Result<DenseMatrix, DynamicsError> {
    let d = m.d();
    let n = m.n();
    if n == 0 {
        return Err(DynamicsError::NoObservations);
    }
    let r = residual_matrix(theta, m)?;
    let c = 2.0 / n as f64;
    let mut h = DenseMatrix::zeros(2 * d * d, 2 * d * d);
    for i in 0..d {
        for j in 0..d {
            let v = c * r[(i, j)];
            if v == 0.0 {
                continue;
            }
            for k in 0..d {
                let (p, q) = (a_index(d, i, k), b_index(d, k, j));
                h[(p, q)] = v;
                h[(q, p)] = v;
            }
        }
    }
    Ok(h)
}

/// `(2/n) J^T J`, where row `(i, j)` of J is the gradient of `(AB)_ij` over
/// observed positions.
pub fn hessian_first_term(
    theta: &FactorPair,
    m: &IncompleteMatrix,
) -> Result<DenseMatrix, DynamicsError> {
    let d = m.d();
    let n = m.n();
    if n == 0 {
        return Err(DynamicsError::NoObservations);
    }
    if theta.d() != d {
        return Err(DynamicsError::Shape(format!(
            "factor side {} does not match instance side {d}",
            theta.d()
        )));
    }
    let c = 2.0 / n as f64;
    let p = 2 * d * d;
    let mut h = DenseMatrix::zeros(p, p);
    let mut row = vec![0.0; p];
    let mut support = Vec::with_capacity(2 * d);
    for (i, j, _) in m.observed() {
        support.clear();
        for k in 0..d {
            let ia = a_index(d, i, k);
            row[ia] = theta.b[(k, j)];
            support.push(ia);
            let ib = b_index(d, k, j);
            row[ib] = theta.a[(i, k)];
            support.push(ib);
        }
        for &s in &support {
            for &t in &support {
                h[(s, t)] += c * row[s] * row[t];
            }
        }
        for &s in &support {
            row[s] = 0.0;
        }
    }
    Ok(h)
}

/// Closed-form spectrum of the residual-curvature term: `(2/n)(+-sigma_k(dM))`,
/// each with multiplicity d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleSpectrum {
    /// `(eigenvalue, multiplicity)` pairs, positive levels first then their negatives.
    pub levels: Vec<(f64, usize)>,
    /// Singular values of the residual, descending.
    pub residual_singular_values: Vec<f64>,
    /// `sigma_1 - sigma_2` of the residual.
    pub top_gap: f64,
}

impl SaddleSpectrum {
    /// All `2 d^2` eigenvalues, descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .levels
            .iter()
            .flat_map(|&(v, mult)| std::iter::repeat_n(v, mult))
            .collect();
        out.sort_by(|a, b| b.total_cmp(a));
        out
    }

    /// Most negative level.
    pub fn min_eigenvalue(&self) -> f64 {
        self.levels.iter().map(|l| l.0).fold(0.0, f64::min)
    }
}

pub fn saddle_spectrum(delta_m: &DenseMatrix, n: usize) -> Result<SaddleSpectrum, LinalgError> {
    if !delta_m.is_square() {
        return Err(LinalgError::NotSquare(delta_m.rows(), delta_m.cols()));
    }
    let d = delta_m.rows();
    let sv = svd(delta_m)?.singular_values;
    let c = 2.0 / n.max(1) as f64;
    let mut levels: Vec<(f64, usize)> = sv.iter().map(|&s| (c * s, d)).collect();
    levels.extend(sv.iter().map(|&s| (-c * s, d)));
    let top_gap = match sv.as_slice() {
        [] => 0.0,
        [s] => *s,
        [s1, s2, ..] => s1 - s2,
    };
    Ok(SaddleSpectrum {
        levels,
        residual_singular_values: sv,
        top_gap,
    })
}

/// The d eigenvectors of the residual-curvature term at level `sign * (2/n) sigma_k`:
/// `[u_k (x) e_l ; sign * v_k (x) e_l] / sqrt(2)` for `l = 0..d`.
pub fn level_eigenvectors(
    delta_m: &DenseMatrix,
    k: usize,
    positive: bool,
) -> Result<Vec<Vec<f64>>, LinalgError> {
    let d = delta_m.rows();
    let s = svd(delta_m)?;
    let u = s.u(k);
    let v = s.v(k);
    let sign = if positive { 1.0 } else { -1.0 };
    let r = std::f64::consts::FRAC_1_SQRT_2;
    Ok((0..d)
        .map(|l| {
            let mut x = vec![0.0; 2 * d * d];
            for i in 0..d {
                x[a_index(d, i, l)] = r * u[i];
            }
            for j in 0..d {
                x[b_index(d, l, j)] = sign * r * v[j];
            }
            x
        })
        .collect())
}

/// `sigma_1 - sigma_2 > gap_tol * sigma_1` for the residual.
pub fn unique_top_singular_check(delta_m: &DenseMatrix, gap_tol: f64) -> Result<bool, LinalgError> {
    let sv = svd(delta_m)?.singular_values;
    let s1 = sv.first().copied().unwrap_or(0.0);
    let s2 = sv.get(1).copied().unwrap_or(0.0);
    Ok(s1 - s2 > gap_tol * s1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::symmetric_eigen;
    use crate::observation::ParseOptions;

    fn parse(s: &str) -> IncompleteMatrix {
        IncompleteMatrix::parse_text(s, ParseOptions::default()).unwrap()
    }

    #[test]
    fn exact_fit_has_zero_second_term() {
        let full = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let m = IncompleteMatrix::fully_observed(full.clone()).unwrap();
        let t = FactorPair::new(DenseMatrix::identity(2), full).unwrap();
        assert_eq!(hessian_second_term(&t, &m).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn single_residual_pairs() {
        let m = parse("2 *\n* *");
        let h = hessian_second_term(&FactorPair::zeros(2), &m).unwrap();
        let nonzero: Vec<(usize, usize)> = (0..8)
            .flat_map(|p| (0..8).map(move |q| (p, q)))
            .filter(|&(p, q)| h[(p, q)] != 0.0)
            .collect();
        assert_eq!(nonzero.len(), 4);
        assert!(nonzero
            .iter()
            .all(|&(p, q)| (h[(p, q)] + 4.0).abs() < 1e-15));
        assert_eq!(h.asymmetry(), 0.0);
    }

    #[test]
    fn first_term_vanishes_at_origin() {
        let m = parse("1 * 3\n* 5 *\n3 * 9");
        assert_eq!(
            hessian_first_term(&FactorPair::zeros(3), &m)
                .unwrap()
                .max_abs(),
            0.0
        );
    }

    #[test]
    fn fig4_origin_spectrum() {
        let m = parse("1 * 3\n* 5 *\n3 * 9");
        let t = FactorPair::zeros(3);
        let dm = residual_matrix(&t, &m).unwrap();
        let spec = saddle_spectrum(&dm, m.n()).unwrap();
        assert!((spec.residual_singular_values[0] - 10.0).abs() < 1e-12);
        assert!((spec.residual_singular_values[1] - 5.0).abs() < 1e-12);
        assert!((spec.top_gap - 5.0).abs() < 1e-12);
        let dense = symmetric_eigen(&hessian_second_term(&t, &m).unwrap()).unwrap();
        for (a, b) in dense.eigenvalues.iter().zip(spec.eigenvalues()) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!((spec.eigenvalues()[0] - 4.0).abs() < 1e-12);
        assert!((spec.min_eigenvalue() + 4.0).abs() < 1e-12);
        assert!(unique_top_singular_check(&dm, 1e-6).unwrap());
    }

    #[test]
    fn coincident_and_degenerate() {
        let m = parse("2 *\n* 2");
        let dm = residual_matrix(&FactorPair::zeros(2), &m).unwrap();
        let spec = saddle_spectrum(&dm, 2).unwrap();
        assert_eq!(spec.top_gap, 0.0);
        assert!(!unique_top_singular_check(&dm, 1e-6).unwrap());
        let rank1 = DenseMatrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]);
        assert!(unique_top_singular_check(&rank1, 1e-6).unwrap());
        let zero = saddle_spectrum(&DenseMatrix::zeros(2, 2), 3).unwrap();
        assert!(zero.eigenvalues().iter().all(|&x| x == 0.0));
        assert_eq!(zero.eigenvalues().len(), 8);
    }
}
