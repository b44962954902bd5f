use serde::{Deserialize, Serialize};

use super::model::residual_of_output;
use super::trainer::{SnapshotKind, TrainConfig, Trajectory};
use super::{risk_gradient, DynamicsError, FactorPair};
use crate::linalg::{svd, DenseMatrix};
use crate::observation::IncompleteMatrix;

/// Leading singular triple of a matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularTriple {
    pub sigma: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl SingularTriple {
    pub fn top_of(m: &DenseMatrix) -> Result<Self, DynamicsError> {
        let s = svd(m)?;
        Ok(SingularTriple {
            sigma: s.singular_values[0],
            u: s.u(0),
            v: s.v(0),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauRecord {
    pub start_step: usize,
    pub end_step: usize,
    pub effective_rank: usize,
    /// W at (the stored snapshot nearest to) the plateau midpoint.
    pub output_snapshot: DenseMatrix,
    /// Top singular triple of `M - W` on the mask at that snapshot.
    pub residual_top_singular: SingularTriple,
    /// Parameters behind `output_snapshot`.
    pub theta: FactorPair,
    /// Stored plateau parameters with the smallest gradient norm.
    pub critical_theta: FactorPair,
    pub min_grad_norm: f64,
    /// Parameters at the first record after the run, if it ended before the trajectory did.
    pub exit_theta: Option<FactorPair>,
    /// The run reaches the end of a converged trajectory.
    pub terminal: bool,
}

/// Maximal runs of recorded steps with gradient norm below the threshold.
///
/// A run qualifies when it spans at least `plateau_min_length` records, or
/// when it closes a converged trajectory.
pub fn detect_plateaus(
    traj: &Trajectory,
    m: &IncompleteMatrix,
    cfg: &TrainConfig,
) -> Result<Vec<PlateauRecord>, DynamicsError> {
    let mut out = Vec::new();
    let n = traj.len();
    let mut k = 0;
    while k < n {
        if traj.grad_norm[k] >= cfg.plateau_grad_threshold {
            k += 1;
            continue;
        }
        let s = k;
        while k < n && traj.grad_norm[k] < cfg.plateau_grad_threshold {
            k += 1;
        }
        let e = k - 1;
        let terminal = e == n - 1 && traj.converged;
        if e - s + 1 < cfg.plateau_min_length && !terminal {
            continue;
        }
        if let Some(rec) = build_record(traj, m, cfg, s, e, terminal)? {
            out.push(rec);
        }
    }
    Ok(out)
}

fn build_record(
    traj: &Trajectory,
    m: &IncompleteMatrix,
    cfg: &TrainConfig,
    s: usize,
    e: usize,
    terminal: bool,
) -> Result<Option<PlateauRecord>, DynamicsError> {
    let (lo, hi) = (traj.steps[s], traj.steps[e]);
    let mid = (s + e) / 2;
    let mid_step = traj.steps[mid];
    let in_range: Vec<_> = traj
        .snapshots
        .iter()
        .filter(|sn| sn.step >= lo && sn.step <= hi)
        .collect();
    let pick = traj
        .nearest_snapshot(SnapshotKind::PlateauCandidate, mid_step, lo, hi)
        .or_else(|| {
            in_range
                .iter()
                .copied()
                .min_by_key(|sn| sn.step.abs_diff(mid_step))
        });
    let Some(mid_snap) = pick else {
        return Ok(None);
    };
    let mut critical = (f64::INFINITY, mid_snap.theta.clone());
    for sn in &in_range {
        let g = risk_gradient(&sn.theta, m)?.norm();
        if g < critical.0 {
            critical = (g, sn.theta.clone());
        }
    }
    let exit_theta = traj
        .snapshots
        .iter()
        .find(|sn| sn.kind == SnapshotKind::PlateauExit && sn.step > hi)
        .filter(|sn| traj.steps.get(e + 1) == Some(&sn.step))
        .map(|sn| sn.theta.clone());
    let w = mid_snap.theta.output();
    let neg_residual = residual_of_output(&w, m).scale(-1.0);
    Ok(Some(PlateauRecord {
        start_step: lo,
        end_step: hi,
        effective_rank: cfg.plateau_rank_policy.rank_of(&traj.sv_w[mid]),
        output_snapshot: w,
        residual_top_singular: SingularTriple::top_of(&neg_residual)?,
        theta: mid_snap.theta.clone(),
        critical_theta: critical.1,
        min_grad_norm: critical.0,
        exit_theta,
        terminal,
    }))
}

/// Effective ranks of the detected plateaus, in order.
pub fn plateau_ranks(plateaus: &[PlateauRecord]) -> Vec<usize> {
    plateaus.iter().map(|p| p.effective_rank).collect()
}
