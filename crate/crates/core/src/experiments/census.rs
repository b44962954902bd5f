use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cell_seed, ExperimentError};
use crate::dynamics::{TrainConfig, Trainer};
use crate::linalg::{singular_values, DenseMatrix};
use crate::observation::{
    classify_connectivity, enumerate_pattern_classes, orbit, ConnectivityClass, IncompleteMatrix,
};

/// Initialization variance of census runs. At 1e-16 some connected
/// patterns keep a finite-init second singular value above the rank cutoff.
pub const CENSUS_INIT_VARIANCE: f64 = 1e-24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusRun {
    /// Row-major 0/1 mask.
    pub mask: Vec<u8>,
    pub converged: bool,
    pub final_loss: f64,
    pub learned_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusClass {
    pub representative: CensusRun,
    pub orbit_size: usize,
    pub connectivity: ConnectivityClass,
    /// Every orbit member trained, for disconnected classes only.
    pub orbit_runs: Vec<CensusRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusRow {
    pub n: usize,
    pub classes: Vec<CensusClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusReport {
    pub d: usize,
    pub seed: u64,
    pub init_variance: f64,
    /// Rank-one ground truth `x y^T`.
    pub ground_truth: Vec<f64>,
    pub rows: Vec<CensusRow>,
}

impl CensusReport {
    pub fn counts(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.classes.len()).collect()
    }

    fn classes_at(&self, n: usize) -> impl Iterator<Item = &CensusClass> {
        self.rows
            .iter()
            .filter(move |r| r.n == n)
            .flat_map(|r| &r.classes)
    }

    /// Whether every connected representative with `n` entries learned rank one.
    pub fn connected_reach_rank_one(&self, n: usize) -> bool {
        self.classes_at(n)
            .filter(|c| c.connectivity == ConnectivityClass::Connected)
            .all(|c| c.representative.learned_rank == 1)
    }

    /// Learned ranks of every orbit member of the disconnected classes with `n` entries.
    pub fn disconnected_orbit_ranks(&self, n: usize) -> Vec<usize> {
        self.classes_at(n)
            .flat_map(|c| c.orbit_runs.iter().map(|o| o.learned_rank))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record([
            "n",
            "class",
            "mask",
            "orbit_size",
            "connectivity",
            "converged",
            "final_loss",
            "learned_rank",
            "orbit_ranks",
        ])?;
        for row in &self.rows {
            for (k, c) in row.classes.iter().enumerate() {
                let r = &c.representative;
                let orbit_ranks: Vec<String> = c
                    .orbit_runs
                    .iter()
                    .map(|o| o.learned_rank.to_string())
                    .collect();
                wtr.write_record([
                    row.n.to_string(),
                    k.to_string(),
                    r.mask.iter().map(|b| b.to_string()).collect::<String>(),
                    c.orbit_size.to_string(),
                    c.connectivity.as_str().to_string(),
                    r.converged.to_string(),
                    format!("{:e}", r.final_loss),
                    r.learned_rank.to_string(),
                    orbit_ranks.join(" "),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Factors with magnitudes in [0.5, 1.5] and random signs, so no entry of the
/// product is near zero.
fn rank_one_truth(d: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |_| {
        let s = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        s * rng.gen_range(0.5..1.5)
    };
    let x: Vec<f64> = (0..d).map(&mut draw).collect();
    let y: Vec<f64> = (0..d).map(&mut draw).collect();
    DenseMatrix::from_fn(d, d, |i, j| x[i] * y[j])
}

fn train_mask(
    truth: &DenseMatrix,
    mask: &DenseMatrix,
    init_variance: f64,
    seed: u64,
) -> Result<CensusRun, ExperimentError> {
    let m = IncompleteMatrix::new(truth.clone(), mask.clone())?;
    let cfg = TrainConfig {
        init_variance,
        rng_seed: seed,
        ..TrainConfig::for_instance(&m)
    };
    let mut t = Trainer::new(&m, cfg.clone())?;
    while !t.is_finished() {
        t.step()?;
    }
    let sv = singular_values(&t.theta().without_isolated(&m).output())?;
    Ok(CensusRun {
        mask: mask
            .as_slice()
            .iter()
            .map(|&x| u8::from(x == 1.0))
            .collect(),
        converged: t.is_converged(),
        final_loss: t.loss(),
        learned_rank: cfg.rank_policy.rank_of(&sv),
    })
}

/// Enumerates the sampling-pattern classes of `d x d` matrices for every
/// sample size and trains each representative on one rank-one ground truth.
/// Disconnected classes additionally train every member of their orbit.
pub fn census(d: usize, seed: u64, init_variance: f64) -> Result<CensusReport, ExperimentError> {
    if !(init_variance.is_finite() && init_variance > 0.0) {
        return Err(ExperimentError::InvalidParameters(
            "init variance must be positive".into(),
        ));
    }
    let truth = rank_one_truth(d, cell_seed(seed, &[0]));
    let train_seed = cell_seed(seed, &[1]);
    let rows = (1..=d * d)
        .map(|n| {
            let classes = enumerate_pattern_classes(d, n)?
                .par_iter()
                .map(|rep| {
                    let members = orbit(rep)?;
                    let probe = IncompleteMatrix::new(truth.clone(), rep.clone())?;
                    let connectivity = classify_connectivity(&probe)?;
                    let representative = train_mask(&truth, rep, init_variance, train_seed)?;
                    let orbit_runs = if connectivity.is_disconnected() {
                        members
                            .iter()
                            .map(|mask| train_mask(&truth, mask, init_variance, train_seed))
                            .collect::<Result<Vec<_>, _>>()?
                    } else {
                        Vec::new()
                    };
                    Ok(CensusClass {
                        representative,
                        orbit_size: members.len(),
                        connectivity,
                        orbit_runs,
                    })
                })
                .collect::<Result<Vec<_>, ExperimentError>>()?;
            Ok(CensusRow { n, classes })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    Ok(CensusReport {
        d,
        seed,
        init_variance,
        ground_truth: truth.as_slice().to_vec(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truth_is_rank_one_without_small_entries() {
        let t = rank_one_truth(3, 5);
        assert!(t.as_slice().iter().all(|x| x.abs() >= 0.25));
        let sv = singular_values(&t).unwrap();
        assert!(sv[1] < 1e-12 * sv[0]);
    }

    #[test]
    fn orbit_sizes_cover_all_masks() {
        let rep = census(2, 0, 1e-12).unwrap();
        assert_eq!(rep.counts(), vec![1, 2, 1, 1]);
        for row in &rep.rows {
            let total: usize = row.classes.iter().map(|c| c.orbit_size).sum();
            let binom = (0..row.n).fold(1, |acc, k| acc * (4 - k) / (k + 1));
            assert_eq!(total, binom);
        }
    }
}
