use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::DynamicsError;
use crate::linalg::DenseMatrix;
use crate::observation::IncompleteMatrix;

/// Model parameters `theta = (A, B)` with output `W = A B`.
///
/// Vectorized parameters list the rows of A first (`A[i][k]` at `i*d + k`)
/// followed by the columns of B (`B[k][j]` at `d*d + j*d + k`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorPair {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
}

impl FactorPair {
    pub fn new(a: DenseMatrix, b: DenseMatrix) -> Result<Self, DynamicsError> {
        if !a.is_square() || a.shape() != b.shape() {
            return Err(DynamicsError::Shape(format!(
                "factors must both be d x d, got {:?} and {:?}",
                a.shape(),
                b.shape()
            )));
        }
        Ok(FactorPair { a, b })
    }

    pub fn zeros(d: usize) -> Self {
        FactorPair {
            a: DenseMatrix::zeros(d, d),
            b: DenseMatrix::zeros(d, d),
        }
    }

    /// Entries drawn i.i.d. from `N(0, variance)`.
    pub fn gaussian<R: Rng + ?Sized>(d: usize, variance: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, variance.sqrt()).expect("variance validated by caller");
        let mut draw = || DenseMatrix::from_fn(d, d, |_, _| normal.sample(rng));
        let a = draw();
        let b = draw();
        FactorPair { a, b }
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.a.rows()
    }

    pub fn output(&self) -> DenseMatrix {
        &self.a * &self.b
    }

    pub fn to_params(&self) -> Vec<f64> {
        let d = self.d();
        let mut p = Vec::with_capacity(2 * d * d);
        p.extend_from_slice(self.a.as_slice());
        for j in 0..d {
            for k in 0..d {
                p.push(self.b[(k, j)]);
            }
        }
        p
    }

    pub fn from_params(d: usize, p: &[f64]) -> Result<Self, DynamicsError> {
        if p.len() != 2 * d * d {
            return Err(DynamicsError::Shape(format!(
                "expected {} parameters, got {}",
                2 * d * d,
                p.len()
            )));
        }
        let a = DenseMatrix::from_row_major(d, d, p[..d * d].to_vec())?;
        let b = DenseMatrix::from_fn(d, d, |k, j| p[d * d + j * d + k]);
        Ok(FactorPair { a, b })
    }

    pub fn norm(&self) -> f64 {
        (self.a.frobenius_norm().powi(2) + self.b.frobenius_norm().powi(2)).sqrt()
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, s: f64, other: &FactorPair) -> FactorPair {
        let mut out = self.clone();
        out.a.axpy(s, &other.a);
        out.b.axpy(s, &other.b);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite()
    }

    /// Copy with the rows of A and columns of B that touch no observation set to zero.
    pub fn without_isolated(&self, m: &IncompleteMatrix) -> FactorPair {
        let mut out = self.clone();
        for i in m.isolated_rows() {
            out.a.row_mut(i).fill(0.0);
        }
        for j in m.isolated_cols() {
            for k in 0..self.d() {
                out.b[(k, j)] = 0.0;
            }
        }
        out
    }

    /// `A^T A - B B^T`, the quantity conserved by gradient flow.
    pub fn imbalance(&self) -> DenseMatrix {
        let ata = self.a.transpose_mul(&self.a).expect("square");
        let bbt = self.b.mul_transpose(&self.b).expect("square");
        &ata - &bbt
    }
}

pub(crate) fn check_shapes(theta: &FactorPair, m: &IncompleteMatrix) -> Result<(), DynamicsError> {
    if theta.d() != m.d() || theta.b.shape() != (m.d(), m.d()) {
        return Err(DynamicsError::Shape(format!(
            "factor side {} does not match instance side {}",
            theta.d(),
            m.d()
        )));
    }
    Ok(())
}

/// `(AB - M)` on the mask, zero elsewhere.
pub fn residual_matrix(
    theta: &FactorPair,
    m: &IncompleteMatrix,
) -> Result<DenseMatrix, DynamicsError> {
    check_shapes(theta, m)?;
    Ok(residual_of_output(&theta.output(), m))
}

pub(crate) fn residual_of_output(w: &DenseMatrix, m: &IncompleteMatrix) -> DenseMatrix {
    let mut r = m.project(w);
    r.axpy(-1.0, m.values());
    r
}

/// Mean squared error over the observed entries.
pub fn empirical_risk(theta: &FactorPair, m: &IncompleteMatrix) -> Result<f64, DynamicsError> {
    let n = m.n();
    if n == 0 {
        return Err(DynamicsError::NoObservations);
    }
    let r = residual_matrix(theta, m)?;
    Ok(r.frobenius_norm().powi(2) / n as f64)
}

/// `dR/dA = (2/n) dM B^T`, `dR/dB = (2/n) A^T dM`.
pub fn risk_gradient(
    theta: &FactorPair,
    m: &IncompleteMatrix,
) -> Result<FactorPair, DynamicsError> {
    let n = m.n();
    if n == 0 {
        return Err(DynamicsError::NoObservations);
    }
    let r = residual_matrix(theta, m)?;
    Ok(gradient_from_residual(theta, &r, n))
}

pub(crate) fn gradient_from_residual(theta: &FactorPair, r: &DenseMatrix, n: usize) -> FactorPair {
    let c = 2.0 / n as f64;
    let ga = r.mul_transpose(&theta.b).expect("square").scale(c);
    let gb = theta.a.transpose_mul(r).expect("square").scale(c);
    FactorPair { a: ga, b: gb }
}

/// `W_aug = [A; B^T]`, a 2d x d matrix.
pub fn augmented(theta: &FactorPair) -> DenseMatrix {
    theta
        .a
        .vstack(&theta.b.transpose())
        .expect("factors share a column count")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{numerical_rank, RankPolicy};
    use crate::observation::ParseOptions;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m4() -> IncompleteMatrix {
        IncompleteMatrix::parse_text("1 2\n3 *", ParseOptions::default()).unwrap()
    }

    #[test]
    fn risk_at_origin() {
        let r = empirical_risk(&FactorPair::zeros(2), &m4()).unwrap();
        assert!((r - 14.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn exact_fits() {
        let full = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let m = IncompleteMatrix::fully_observed(full.clone()).unwrap();
        let theta = FactorPair::new(DenseMatrix::identity(2), full).unwrap();
        assert_eq!(empirical_risk(&theta, &m).unwrap(), 0.0);
        let g = risk_gradient(&theta, &m).unwrap();
        assert_eq!(g.norm(), 0.0);
        assert_eq!(
            residual_matrix(&theta, &m).unwrap(),
            DenseMatrix::zeros(2, 2)
        );
    }

    #[test]
    fn residual_examples() {
        let m = m4();
        let r0 = residual_matrix(&FactorPair::zeros(2), &m).unwrap();
        assert_eq!(r0, DenseMatrix::from_rows(&[[-1.0, -2.0], [-3.0, 0.0]]));
        let theta = FactorPair::new(DenseMatrix::identity(2), DenseMatrix::zeros(2, 2)).unwrap();
        assert_eq!(residual_matrix(&theta, &m).unwrap(), r0);
        assert_eq!(
            risk_gradient(&FactorPair::zeros(2), &m).unwrap().norm(),
            0.0
        );
    }

    #[test]
    fn param_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = FactorPair::gaussian(3, 1.0, &mut rng);
        let p = t.to_params();
        assert_eq!(p[3 + 1], t.a[(1, 1)]);
        assert_eq!(p[9 + 2 * 3 + 1], t.b[(1, 2)]);
        assert_eq!(FactorPair::from_params(3, &p).unwrap(), t);
        assert!(FactorPair::from_params(3, &p[1..]).is_err());
    }

    #[test]
    fn augmented_examples() {
        let p = RankPolicy::default();
        let eye = FactorPair::new(DenseMatrix::identity(2), DenseMatrix::identity(2)).unwrap();
        let w = augmented(&eye);
        assert_eq!(w.shape(), (4, 2));
        assert_eq!(numerical_rank(&w, &p).unwrap(), 2);

        let b = DenseMatrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]);
        let t = FactorPair::new(DenseMatrix::zeros(2, 2), b.clone()).unwrap();
        assert_eq!(
            numerical_rank(&augmented(&t), &p).unwrap(),
            numerical_rank(&b.transpose(), &p).unwrap()
        );

        let alpha = [1.0, -2.0];
        let a = DenseMatrix::from_fn(2, 2, |i, k| [3.0, 1.0][i] * alpha[k]);
        let b = DenseMatrix::from_fn(2, 2, |k, j| alpha[k] * [0.5, -1.0][j]);
        let t = FactorPair::new(a, b).unwrap();
        assert_eq!(numerical_rank(&augmented(&t), &p).unwrap(), 1);
    }

    #[test]
    fn shape_mismatch() {
        assert!(empirical_risk(&FactorPair::zeros(3), &m4()).is_err());
        assert!(FactorPair::new(DenseMatrix::zeros(2, 2), DenseMatrix::zeros(3, 3)).is_err());
    }
}
