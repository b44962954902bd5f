use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{check_shapes, gradient_from_residual, residual_of_output};
use super::plateau::{detect_plateaus, PlateauRecord};
use super::{augmented, DynamicsError, FactorPair};
use crate::linalg::{singular_values, RankPolicy};
use crate::observation::IncompleteMatrix;

/// Relative slack allowed in the per-step loss comparison of the guard.
const GUARD_SLACK: f64 = 1e-10;
/// Upper bound on the number of snapshots kept for a running plateau.
const RUN_SNAPSHOT_CAP: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Variance of the i.i.d. Gaussian initialization of A and B.
    pub init_variance: f64,
    pub learning_rate: f64,
    pub max_steps: usize,
    pub loss_tolerance: f64,
    pub record_stride: usize,
    pub rng_seed: u64,
    pub plateau_grad_threshold: f64,
    /// Minimum plateau length, counted in recorded steps.
    pub plateau_min_length: usize,
    /// Policy for final and reported ranks.
    pub rank_policy: RankPolicy,
    /// Policy for the effective rank of W on plateaus and for rank-increase events.
    pub plateau_rank_policy: RankPolicy,
    /// Policy for the ranks of A, B^T and W_aug in the HIMT monitor.
    pub himt_policy: RankPolicy,
    /// Total learning-rate halvings tolerated before the run is declared divergent.
    pub max_halvings: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            init_variance: 1e-8,
            learning_rate: 1e-3,
            max_steps: 400_000,
            loss_tolerance: 1e-10,
            record_stride: 10,
            rng_seed: 0,
            plateau_grad_threshold: 1e-2,
            plateau_min_length: 20,
            rank_policy: RankPolicy::default(),
            plateau_rank_policy: RankPolicy {
                relative_threshold: 1e-2,
                absolute_threshold: 1e-2,
            },
            himt_policy: RankPolicy {
                relative_threshold: 1e-2,
                absolute_threshold: 1e-2,
            },
            max_halvings: 60,
        }
    }
}

impl TrainConfig {
    /// Defaults scaled to the observed values of `m`.
    ///
    /// Learning rate `1e-2 n / |M_obs|_F^2`; plateau ranks cut at
    /// `1e-2 max|M_obs|`; factor ranks cut at `1e-2 sqrt(max|M_obs|)`;
    /// plateau gradient threshold `0.02 (2/n) |M_obs|_F^{3/2}`.
    pub fn for_instance(m: &IncompleteMatrix) -> Self {
        let n = m.n().max(1) as f64;
        let fro = m.observed_norm().max(f64::MIN_POSITIVE);
        let top = m.max_abs_observed().max(f64::MIN_POSITIVE);
        TrainConfig {
            learning_rate: 1e-2 * n / (fro * fro),
            plateau_grad_threshold: 0.02 * (2.0 / n) * fro.powf(1.5),
            plateau_rank_policy: RankPolicy {
                relative_threshold: 1e-2,
                absolute_threshold: 1e-2 * top,
            },
            himt_policy: RankPolicy {
                relative_threshold: 1e-2,
                absolute_threshold: 1e-2 * top.sqrt(),
            },
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        let bad = |what: &str| Err(DynamicsError::InvalidConfig(what.to_string()));
        if !pos(self.init_variance) {
            return bad("init_variance must be positive");
        }
        if !pos(self.learning_rate) {
            return bad("learning_rate must be positive");
        }
        if !pos(self.loss_tolerance) || self.loss_tolerance >= 1.0 {
            return bad("loss_tolerance must lie in (0, 1)");
        }
        if self.record_stride == 0 {
            return bad("record_stride must be positive");
        }
        if !pos(self.plateau_grad_threshold) {
            return bad("plateau_grad_threshold must be positive");
        }
        if self.plateau_min_length == 0 {
            return bad("plateau_min_length must be positive");
        }
        self.rank_policy.validate()?;
        self.plateau_rank_policy.validate()?;
        self.himt_policy.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SnapshotKind {
    Initial,
    Periodic,
    PlateauCandidate,
    RankIncrease,
    /// First record after a qualifying low-gradient run ends.
    PlateauExit,
    Final,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub kind: SnapshotKind,
    pub theta: FactorPair,
}

/// Recorded time series of a training run.
///
/// Singular values are computed on the view with unobserved rows of A and
/// unobserved columns of B set to zero.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub d: usize,
    pub steps: Vec<usize>,
    pub loss: Vec<f64>,
    pub grad_norm: Vec<f64>,
    pub sv_w: Vec<Vec<f64>>,
    pub sv_a: Vec<Vec<f64>>,
    pub sv_b: Vec<Vec<f64>>,
    pub sv_waug: Vec<Vec<f64>>,
    pub snapshots: Vec<Snapshot>,
    pub plateaus: Vec<PlateauRecord>,
    pub converged: bool,
    pub final_learning_rate: f64,
    pub halvings: u32,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_step(&self) -> usize {
        self.steps.last().copied().unwrap_or(0)
    }

    pub fn snapshots_of(&self, kind: SnapshotKind) -> impl Iterator<Item = &Snapshot> {
        self.snapshots.iter().filter(move |s| s.kind == kind)
    }

    /// Snapshot of `kind` nearest to `step` within `[lo, hi]`.
    pub fn nearest_snapshot(
        &self,
        kind: SnapshotKind,
        step: usize,
        lo: usize,
        hi: usize,
    ) -> Option<&Snapshot> {
        self.snapshots_of(kind)
            .filter(|s| s.step >= lo && s.step <= hi)
            .min_by_key(|s| s.step.abs_diff(step))
    }
}

/// Plain gradient descent on the masked risk with a monotonicity guard.
///
/// A step whose loss exceeds the current one by more than a relative `1e-10`
/// is rejected and retried at half the learning rate; the halving persists.
#[derive(Debug, Clone)]
pub struct Trainer<'a> {
    m: &'a IncompleteMatrix,
    cfg: TrainConfig,
    n: usize,
    theta: FactorPair,
    loss: f64,
    grad: FactorPair,
    grad_norm: f64,
    lr: f64,
    step: usize,
    halvings: u32,
}

impl<'a> Trainer<'a> {
    /// Starts from the seeded Gaussian initialization.
    pub fn new(m: &'a IncompleteMatrix, cfg: TrainConfig) -> Result<Self, DynamicsError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let theta = FactorPair::gaussian(m.d(), cfg.init_variance, &mut rng);
        Self::from_theta(m, cfg, theta)
    }

    pub fn from_theta(
        m: &'a IncompleteMatrix,
        cfg: TrainConfig,
        theta: FactorPair,
    ) -> Result<Self, DynamicsError> {
        cfg.validate()?;
        check_shapes(&theta, m)?;
        let n = m.n();
        if n == 0 {
            return Err(DynamicsError::NoObservations);
        }
        let r = residual_of_output(&theta.output(), m);
        let loss = r.frobenius_norm().powi(2) / n as f64;
        if !loss.is_finite() {
            return Err(DynamicsError::Diverged { step: 0, loss });
        }
        let grad = gradient_from_residual(&theta, &r, n);
        let grad_norm = grad.norm();
        let lr = cfg.learning_rate;
        Ok(Trainer {
            m,
            cfg,
            n,
            theta,
            loss,
            grad,
            grad_norm,
            lr,
            step: 0,
            halvings: 0,
        })
    }

    /// One accepted gradient step.
    pub fn step(&mut self) -> Result<(), DynamicsError> {
        loop {
            let cand = self.theta.add_scaled(-self.lr, &self.grad);
            let r = residual_of_output(&cand.output(), self.m);
            let loss = r.frobenius_norm().powi(2) / self.n as f64;
            if loss.is_finite() && loss <= self.loss * (1.0 + GUARD_SLACK) {
                self.grad = gradient_from_residual(&cand, &r, self.n);
                self.grad_norm = self.grad.norm();
                self.theta = cand;
                self.loss = loss;
                self.step += 1;
                return Ok(());
            }
            self.halvings += 1;
            self.lr *= 0.5;
            if self.halvings > self.cfg.max_halvings {
                return Err(DynamicsError::Diverged {
                    step: self.step + 1,
                    loss,
                });
            }
        }
    }

    pub fn theta(&self) -> &FactorPair {
        &self.theta
    }

    pub fn into_theta(self) -> FactorPair {
        self.theta
    }

    pub fn loss(&self) -> f64 {
        self.loss
    }

    pub fn gradient(&self) -> &FactorPair {
        &self.grad
    }

    pub fn grad_norm(&self) -> f64 {
        self.grad_norm
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn halvings(&self) -> u32 {
        self.halvings
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn is_converged(&self) -> bool {
        self.loss < self.cfg.loss_tolerance
    }

    pub fn is_finished(&self) -> bool {
        self.is_converged() || self.step >= self.cfg.max_steps
    }
}

/// Keeps a thinned set of snapshots for the current low-gradient run.
#[derive(Default)]
struct RunTracker {
    active: bool,
    start_record: usize,
    records: usize,
    keep_every: usize,
    kept: Vec<(usize, usize, FactorPair)>,
    best: Option<(f64, usize, FactorPair)>,
}

impl RunTracker {
    fn push(&mut self, record: usize, step: usize, grad: f64, theta: &FactorPair) {
        if !self.active {
            *self = RunTracker {
                active: true,
                start_record: record,
                keep_every: 1,
                ..RunTracker::default()
            };
        }
        let local = record - self.start_record;
        self.records += 1;
        if local.is_multiple_of(self.keep_every) {
            self.kept.push((local, step, theta.clone()));
            if self.kept.len() > RUN_SNAPSHOT_CAP {
                self.keep_every *= 2;
                let every = self.keep_every;
                self.kept.retain(|(l, _, _)| l % every == 0);
            }
        }
        if self.best.as_ref().is_none_or(|(g, _, _)| grad < *g) {
            self.best = Some((grad, step, theta.clone()));
        }
    }

    fn finish(
        &mut self,
        min_len: usize,
        force: bool,
        exit: Option<(usize, &FactorPair)>,
        out: &mut Vec<Snapshot>,
    ) {
        if self.active && (self.records >= min_len || force) {
            let mid = (self.records - 1) / 2;
            if let Some((_, step, theta)) = self
                .kept
                .iter()
                .min_by_key(|(l, _, _)| l.abs_diff(mid))
                .cloned()
            {
                out.push(Snapshot {
                    step,
                    kind: SnapshotKind::PlateauCandidate,
                    theta,
                });
            }
            if let Some((_, step, theta)) = self.best.take() {
                out.push(Snapshot {
                    step,
                    kind: SnapshotKind::PlateauCandidate,
                    theta,
                });
            }
            if let Some((step, theta)) = exit {
                out.push(Snapshot {
                    step,
                    kind: SnapshotKind::PlateauExit,
                    theta: theta.clone(),
                });
            }
        }
        *self = RunTracker::default();
    }
}

struct Recorder<'a> {
    m: &'a IncompleteMatrix,
    cfg: &'a TrainConfig,
    traj: Trajectory,
    run: RunTracker,
    max_rank: usize,
}

impl<'a> Recorder<'a> {
    fn record(&mut self, t: &Trainer<'_>) -> Result<(), DynamicsError> {
        let step = t.step_index();
        if self.traj.steps.last() == Some(&step) {
            return Ok(());
        }
        let view = t.theta().without_isolated(self.m);
        let sv_w = singular_values(&view.output())?;
        let rank = self.cfg.plateau_rank_policy.rank_of(&sv_w);
        if rank > self.max_rank {
            self.max_rank = rank;
            self.traj.snapshots.push(Snapshot {
                step,
                kind: SnapshotKind::RankIncrease,
                theta: t.theta().clone(),
            });
        }
        self.traj.steps.push(step);
        self.traj.loss.push(t.loss());
        self.traj.grad_norm.push(t.grad_norm());
        self.traj.sv_a.push(singular_values(&view.a)?);
        self.traj.sv_b.push(singular_values(&view.b)?);
        self.traj.sv_waug.push(singular_values(&augmented(&view))?);
        self.traj.sv_w.push(sv_w);

        let record = self.traj.steps.len() - 1;
        if t.grad_norm() < self.cfg.plateau_grad_threshold {
            self.run.push(record, step, t.grad_norm(), t.theta());
        } else {
            self.run.finish(
                self.cfg.plateau_min_length,
                false,
                Some((step, t.theta())),
                &mut self.traj.snapshots,
            );
        }
        let periodic = self.cfg.record_stride.saturating_mul(100);
        if step > 0 && step.is_multiple_of(periodic) {
            self.traj.snapshots.push(Snapshot {
                step,
                kind: SnapshotKind::Periodic,
                theta: t.theta().clone(),
            });
        }
        Ok(())
    }
}

/// Runs gradient descent from the seeded initialization and records the trajectory.
pub fn train(
    m: &IncompleteMatrix,
    cfg: &TrainConfig,
) -> Result<(FactorPair, Trajectory), DynamicsError> {
    train_observed(m, cfg, |_, _| {})
}

/// As [`train`], calling `observer(step, theta)` at every recorded step.
pub fn train_observed(
    m: &IncompleteMatrix,
    cfg: &TrainConfig,
    observer: impl FnMut(usize, &FactorPair),
) -> Result<(FactorPair, Trajectory), DynamicsError> {
    let trainer = Trainer::new(m, cfg.clone())?;
    run_trainer(trainer, observer)
}

/// Drives an existing trainer to completion with full recording.
pub fn run_trainer(
    mut trainer: Trainer<'_>,
    mut observer: impl FnMut(usize, &FactorPair),
) -> Result<(FactorPair, Trajectory), DynamicsError> {
    let m = trainer.m;
    let cfg = trainer.cfg.clone();
    let mut rec = Recorder {
        m,
        cfg: &cfg,
        traj: Trajectory {
            d: m.d(),
            ..Trajectory::default()
        },
        run: RunTracker::default(),
        max_rank: 0,
    };
    rec.traj.snapshots.push(Snapshot {
        step: trainer.step_index(),
        kind: SnapshotKind::Initial,
        theta: trainer.theta().clone(),
    });
    rec.record(&trainer)?;
    observer(trainer.step_index(), trainer.theta());
    while !trainer.is_finished() {
        trainer.step()?;
        if trainer.step_index().is_multiple_of(cfg.record_stride) || trainer.is_finished() {
            let before = rec.traj.steps.len();
            rec.record(&trainer)?;
            if rec.traj.steps.len() > before {
                observer(trainer.step_index(), trainer.theta());
            }
        }
    }
    let converged = trainer.is_converged();
    rec.run.finish(
        cfg.plateau_min_length,
        converged,
        None,
        &mut rec.traj.snapshots,
    );
    rec.traj.snapshots.push(Snapshot {
        step: trainer.step_index(),
        kind: SnapshotKind::Final,
        theta: trainer.theta().clone(),
    });
    rec.traj.converged = converged;
    rec.traj.final_learning_rate = trainer.learning_rate();
    rec.traj.halvings = trainer.halvings();
    let mut traj = rec.traj;
    traj.plateaus = detect_plateaus(&traj, m, &cfg)?;
    Ok((trainer.into_theta(), traj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::empirical_risk;
    use crate::linalg::DenseMatrix;
    use crate::observation::ParseOptions;

    fn parse(s: &str) -> IncompleteMatrix {
        IncompleteMatrix::parse_text(s, ParseOptions::default()).unwrap()
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
        let c = TrainConfig {
            loss_tolerance: 1.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            record_stride: 0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let m = parse("1 2\n3 *");
        let cfg = TrainConfig {
            max_steps: 3000,
            ..TrainConfig::for_instance(&m)
        };
        let (a, ta) = train(&m, &cfg).unwrap();
        let (b, tb) = train(&m, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta.loss, tb.loss);
    }

    #[test]
    fn loss_is_monotone_and_series_aligned() {
        let m = parse("1 2\n3 *");
        let cfg = TrainConfig {
            learning_rate: 0.5,
            max_steps: 2000,
            ..TrainConfig::for_instance(&m)
        };
        let (_, t) = train(&m, &cfg).unwrap();
        assert!(t.halvings > 0);
        assert!(t
            .loss
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 + GUARD_SLACK)));
        let n = t.len();
        for s in [&t.sv_w, &t.sv_a, &t.sv_b, &t.sv_waug] {
            assert_eq!(s.len(), n);
        }
        assert_eq!(t.grad_norm.len(), n);
    }

    #[test]
    fn converges_on_small_instance() {
        let m = parse("1 2\n3 *");
        let cfg = TrainConfig {
            init_variance: 1e-12,
            ..TrainConfig::for_instance(&m)
        };
        let (theta, t) = train(&m, &cfg).unwrap();
        assert!(t.converged);
        assert!(empirical_risk(&theta, &m).unwrap() < 1e-10);
        assert!(
            (theta.output()[(1, 1)] - 6.0).abs() < 5e-2,
            "{}",
            theta.output()[(1, 1)]
        );
    }

    #[test]
    fn already_converged_run() {
        let full = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let m = IncompleteMatrix::fully_observed(full.clone()).unwrap();
        let theta = FactorPair::new(DenseMatrix::identity(2), full).unwrap();
        let trainer = Trainer::from_theta(&m, TrainConfig::for_instance(&m), theta).unwrap();
        let (_, t) = run_trainer(trainer, |_, _| {}).unwrap();
        assert!(t.converged);
        assert_eq!(t.len(), 1);
        assert_eq!(t.plateaus.len(), 1);
        assert!(t.plateaus[0].terminal);
    }

    #[test]
    fn divergence_is_reported() {
        let m = parse("1 2\n3 *");
        let theta = FactorPair::new(DenseMatrix::identity(2), DenseMatrix::identity(2)).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e30,
            max_halvings: 3,
            ..TrainConfig::for_instance(&m)
        };
        let mut tr = Trainer::from_theta(&m, cfg, theta).unwrap();
        assert!(matches!(
            tr.step(),
            Err(DynamicsError::Diverged { step: 1, .. })
        ));
    }
}
