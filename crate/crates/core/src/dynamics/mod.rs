//! The factorized model `W = A B`, its masked risk, gradient descent and
//! trajectory instrumentation.

mod model;
mod monitors;
mod plateau;
mod trainer;

pub use model::{augmented, empirical_risk, residual_matrix, risk_gradient, FactorPair};
pub use monitors::{himt_check, manifold_membership, sub_manifold_membership, HimtStatus};
pub use plateau::{detect_plateaus, plateau_ranks, PlateauRecord, SingularTriple};
pub use trainer::{
    run_trainer, train, train_observed, Snapshot, SnapshotKind, TrainConfig, Trainer, Trajectory,
};

use std::io::Write;

use thiserror::Error;

use crate::linalg::LinalgError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("the instance has no observed entries")]
    NoObservations,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged at step {step} (loss {loss})")]
    Diverged { step: usize, loss: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Writes the trajectory as CSV, one row per recorded step.
///
/// Columns: `step,loss,grad_norm,sv_w_1..sv_w_d,sv_a_1..sv_a_d,sv_b_1..sv_b_d,sv_waug_1..sv_waug_d`.
/// Reals use the shortest exponent form that round-trips.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<(), csv::Error> {
    let d = traj.d;
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["step".to_string(), "loss".into(), "grad_norm".into()];
    for name in ["sv_w", "sv_a", "sv_b", "sv_waug"] {
        header.extend((1..=d).map(|k| format!("{name}_{k}")));
    }
    wtr.write_record(&header)?;
    for r in 0..traj.len() {
        let mut row = vec![
            traj.steps[r].to_string(),
            format!("{:e}", traj.loss[r]),
            format!("{:e}", traj.grad_norm[r]),
        ];
        for series in [&traj.sv_w, &traj.sv_a, &traj.sv_b, &traj.sv_waug] {
            row.extend(series[r].iter().map(|x| format!("{x:e}")));
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observation::{IncompleteMatrix, ParseOptions};

    #[test]
    fn csv_layout() {
        let m = IncompleteMatrix::parse_text("1 2\n3 *", ParseOptions::default()).unwrap();
        let cfg = TrainConfig {
            max_steps: 50,
            ..TrainConfig::for_instance(&m)
        };
        let (_, t) = train(&m, &cfg).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "step,loss,grad_norm,sv_w_1,sv_w_2,sv_a_1,sv_a_2,sv_b_1,sv_b_2,sv_waug_1,sv_waug_2"
        );
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 11);
        let loss: f64 = first[1].parse().unwrap();
        assert_eq!(loss, t.loss[0]);
        assert_eq!(text.lines().count(), t.len() + 1);
    }
}
