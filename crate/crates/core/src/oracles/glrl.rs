use super::{require_observations, Certificate, OracleError, OracleMethod, OracleResult};
use crate::dynamics::{residual_matrix, FactorPair, TrainConfig, Trainer};
use crate::linalg::{svd, DenseMatrix};
use crate::observation::IncompleteMatrix;

/// Each stage runs until the gradient norm drops below this.
pub const GLRL_STAGE_GRAD_TOL: f64 = 1e-9;
/// Seed perturbation size relative to the top singular value of the negative gradient.
pub const GLRL_SEED_SCALE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GlrlOutcome {
    pub result: OracleResult,
    /// `W` at the end of each stage.
    pub stage_outputs: Vec<DenseMatrix>,
}

/// Greedy low-rank learning.
///
/// Stage r seeds a new factor column and row along the top singular pair of
/// the negative gradient `(2/n)(M - W)` on the mask, then runs gradient
/// descent at rank r. Rank-r factors live in the first r columns of A and
/// rows of B; the zero padding receives zero gradient and stays zero.
pub fn glrl(m: &IncompleteMatrix, cfg: &TrainConfig) -> Result<GlrlOutcome, OracleError> {
    require_observations(m)?;
    cfg.validate()?;
    let d = m.d();
    let n = m.n() as f64;
    let mut theta = FactorPair::zeros(d);
    let mut outputs = Vec::new();
    let mut losses = Vec::new();
    let mut steps = Vec::new();
    for stage in 1..=d {
        let neg_grad = residual_matrix(&theta, m)?.scale(-2.0 / n);
        let s = svd(&neg_grad)?;
        let eps = GLRL_SEED_SCALE * s.singular_values[0];
        let (u, v) = (s.u(0), s.v(0));
        for i in 0..d {
            theta.a[(i, stage - 1)] = eps * u[i];
            theta.b[(stage - 1, i)] = eps * v[i];
        }
        let mut t = Trainer::from_theta(m, cfg.clone(), theta)?;
        let mut taken = 0;
        while t.grad_norm() >= GLRL_STAGE_GRAD_TOL && taken < cfg.max_steps {
            t.step()?;
            taken += 1;
        }
        let grad_norm = t.grad_norm();
        let loss = t.loss();
        theta = t.into_theta();
        if grad_norm >= GLRL_STAGE_GRAD_TOL {
            return Err(OracleError::StageNotConverged { stage, grad_norm });
        }
        outputs.push(theta.output());
        losses.push(loss);
        steps.push(taken);
        if loss < cfg.loss_tolerance {
            break;
        }
    }
    let completion = theta.output();
    let rank = outputs.len() as f64;
    let result = OracleResult::new(
        OracleMethod::Glrl,
        completion,
        rank,
        false,
        Certificate::Stages { losses, steps },
    )?;
    Ok(GlrlOutcome {
        result,
        stage_outputs: outputs,
    })
}
