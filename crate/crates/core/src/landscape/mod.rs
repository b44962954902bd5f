//! Hessian structure, critical-point classification and escape-direction
//! prediction for the masked factorization risk.

mod hessian;
mod refine;

pub use hessian::{
    hessian_first_term, hessian_second_term, level_eigenvectors, saddle_spectrum,
    unique_top_singular_check, HessianPair, SaddleSpectrum,
};
pub use refine::{
    assumption2_check, leading_span, manifold_tangent_basis, refine_critical_point, Refinement,
    RestrictedCurvature,
};

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{residual_matrix, risk_gradient, DynamicsError, FactorPair};
use crate::linalg::{svd, symmetric_eigen, DenseMatrix, LinalgError};
use crate::observation::IncompleteMatrix;

/// Largest side for which the dense Hessian is assembled and diagonalized.
pub const MAX_HESSIAN_DIM: usize = 8;
/// Default relative gap tolerance for the unique-top-singular-value check.
pub const DEFAULT_GAP_TOL: f64 = 1e-6;
/// Gap below which the escape prediction is flagged as ill-defined.
pub const ESCAPE_GAP_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LandscapeError {
    #[error("gradient norm {grad_norm:.3e} exceeds the near-criticality tolerance {tol:.3e}")]
    NotNearCritical { grad_norm: f64, tol: f64 },
    #[error(
        "critical point is neither a strict saddle nor a global minimum \
         (min eigenvalue {min_eigenvalue:.3e}, residual norm {residual_norm:.3e})"
    )]
    UnclassifiableCriticalPoint {
        min_eigenvalue: f64,
        residual_norm: f64,
    },
    #[error("dense Hessian analysis is limited to d <= {max}; got d = {d}")]
    TooLarge { d: usize, max: usize },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Near-criticality tolerance `1e-7 (1 + |M_obs|_F)`.
pub fn default_critical_tol(m: &IncompleteMatrix) -> f64 {
    1e-7 * (1.0 + m.observed_norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CriticalPointClass {
    StrictSaddle { min_eigenvalue: f64 },
    GlobalMinimum { residual_norm: f64 },
}

impl CriticalPointClass {
    pub fn is_saddle(&self) -> bool {
        matches!(self, CriticalPointClass::StrictSaddle { .. })
    }
}

/// Full Hessian `h1 + h2` with a size guard.
pub fn full_hessian(
    theta: &FactorPair,
    m: &IncompleteMatrix,
) -> Result<DenseMatrix, LandscapeError> {
    if m.d() > MAX_HESSIAN_DIM {
        return Err(LandscapeError::TooLarge {
            d: m.d(),
            max: MAX_HESSIAN_DIM,
        });
    }
    Ok(HessianPair::compute(theta, m)?.full())
}

/// Classifies a near-critical point as a global minimum (vanishing residual)
/// or a strict saddle (Hessian eigenvalue below `-tol`).
pub fn classify_critical_point(
    theta: &FactorPair,
    m: &IncompleteMatrix,
    tol: f64,
) -> Result<CriticalPointClass, LandscapeError> {
    let grad_norm = risk_gradient(theta, m)?.norm();
    if grad_norm > tol {
        return Err(LandscapeError::NotNearCritical { grad_norm, tol });
    }
    let residual_norm = residual_matrix(theta, m)?.frobenius_norm();
    if residual_norm <= tol {
        return Ok(CriticalPointClass::GlobalMinimum { residual_norm });
    }
    let h = full_hessian(theta, m)?;
    let min_eigenvalue = *symmetric_eigen(&h)?.eigenvalues.last().unwrap_or(&0.0);
    if min_eigenvalue < -tol {
        Ok(CriticalPointClass::StrictSaddle { min_eigenvalue })
    } else {
        Err(LandscapeError::UnclassifiableCriticalPoint {
            min_eigenvalue,
            residual_norm,
        })
    }
}

/// Predicted escape direction: the top singular triple of `M - W` on the mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeDirection {
    pub sigma1: f64,
    pub u1: Vec<f64>,
    pub v1: Vec<f64>,
    /// `sigma_1 - sigma_2` of the residual.
    pub gap: f64,
    /// The gap is below the floor, so the leading direction is not unique.
    pub ill_defined: bool,
}

pub fn escape_direction(
    theta_c: &FactorPair,
    m: &IncompleteMatrix,
) -> Result<EscapeDirection, LandscapeError> {
    let neg = residual_matrix(theta_c, m)?.scale(-1.0);
    let s = svd(&neg)?;
    let s1 = s.singular_values[0];
    let s2 = s.singular_values.get(1).copied().unwrap_or(0.0);
    let gap = s1 - s2;
    Ok(EscapeDirection {
        sigma1: s1,
        u1: s.u(0),
        v1: s.v(0),
        gap,
        ill_defined: gap < ESCAPE_GAP_FLOOR * s1.max(1.0),
    })
}

/// Writes a matrix as headerless CSV with round-trip precision.
pub fn write_matrix_csv<W: Write>(h: &DenseMatrix, out: W) -> Result<(), csv::Error> {
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    for i in 0..h.rows() {
        wtr.write_record(h.row(i).iter().map(|x| format!("{x:e}")))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes `index,eigenvalue` rows.
pub fn write_spectrum_csv<W: Write>(eigenvalues: &[f64], out: W) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["index", "eigenvalue"])?;
    for (k, v) in eigenvalues.iter().enumerate() {
        wtr.write_record([k.to_string(), format!("{v:e}")])?;
    }
    wtr.flush()?;
    Ok(())
}
