//! Ground-truth completions: minimum nuclear norm, rank-1 feasibility,
//! heuristic minimum rank, and greedy low-rank learning.

mod glrl;
mod nuclear;
mod rank;

pub use glrl::{glrl, GlrlOutcome, GLRL_SEED_SCALE, GLRL_STAGE_GRAD_TOL};
pub use nuclear::{
    min_nuclear_norm_bipartite_blocks, min_nuclear_norm_general, ConvexSolverConfig,
};
pub use rank::{
    min_rank_search, min_rank_search_with, rank1_completion_feasible, MinRankConfig,
    Rank1Feasibility,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::DynamicsError;
use crate::linalg::{nuclear_norm, numerical_rank, DenseMatrix, LinalgError, RankPolicy};
use crate::observation::{Component, IncompleteMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("the instance has no observed entries")]
    NoObservations,
    #[error("solver did not converge in {iterations} iterations (last gap {gap:.3e})")]
    NotConverged { iterations: usize, gap: f64 },
    #[error("component with rows {:?} and cols {:?} is not complete bipartite", .0.rows, .0.cols)]
    NotCompleteBipartite(Component),
    #[error("observed entry ({row}, {col}) is zero; the rank-1 test needs nonzero observations")]
    ZeroObservation { row: usize, col: usize },
    #[error("GLRL stage {stage} stopped at gradient norm {grad_norm:.3e}")]
    StageNotConverged { stage: usize, grad_norm: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    DouglasRachford,
    BipartiteBlocks,
    Rank1Exact,
    AlternatingLeastSquares,
    Glrl,
}

impl OracleMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            OracleMethod::DouglasRachford => "douglas_rachford",
            OracleMethod::BipartiteBlocks => "bipartite_blocks",
            OracleMethod::Rank1Exact => "rank1_exact",
            OracleMethod::AlternatingLeastSquares => "alternating_least_squares",
            OracleMethod::Glrl => "glrl",
        }
    }
}

/// Method-specific evidence behind an [`OracleResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    Convex {
        iterations: usize,
        primal_gap: f64,
    },
    BlockSums {
        block_nuclear_norms: Vec<f64>,
    },
    /// Rank 0 or an exact rank-1 witness.
    Exact,
    /// Best alternating-least-squares fit at the reported rank.
    HeuristicUpperBound {
        restarts: usize,
        successes: usize,
        best_residual: f64,
    },
    Stages {
        losses: Vec<f64>,
        steps: Vec<usize>,
    },
}

/// A completion together with its objective value and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub method: OracleMethod,
    pub completion: DenseMatrix,
    /// Nuclear norm for the nuclear-norm oracles, rank for the rank oracles.
    pub objective: f64,
    pub rank: usize,
    pub nuclear_norm: f64,
    pub certified: bool,
    pub certificate: Certificate,
}

impl OracleResult {
    fn new(
        method: OracleMethod,
        completion: DenseMatrix,
        objective: f64,
        certified: bool,
        certificate: Certificate,
    ) -> Result<Self, LinalgError> {
        Ok(OracleResult {
            method,
            rank: numerical_rank(&completion, &RankPolicy::default())?,
            nuclear_norm: nuclear_norm(&completion)?,
            completion,
            objective,
            certified,
            certificate,
        })
    }

    /// Report object with keys `method, objective, rank, nuclear_norm,
    /// certified, completion, certificate`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "method": self.method.as_str(),
            "objective": self.objective,
            "rank": self.rank,
            "nuclear_norm": self.nuclear_norm,
            "certified": self.certified,
            "completion": self.completion.to_rows(),
            "certificate": self.certificate,
        })
    }

    /// Largest deviation from the observations.
    pub fn observation_error(&self, m: &IncompleteMatrix) -> f64 {
        m.max_observed_deviation(&self.completion)
    }
}

fn require_observations(m: &IncompleteMatrix) -> Result<(), OracleError> {
    if m.n() == 0 {
        Err(OracleError::NoObservations)
    } else {
        Ok(())
    }
}
