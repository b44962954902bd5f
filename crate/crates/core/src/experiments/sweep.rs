use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cell_seed, ExperimentError};
use crate::dynamics::{TrainConfig, Trainer};
use crate::linalg::singular_values;
use crate::observation::IncompleteMatrix;

/// Shrink factor per decade of initialization scale (`sqrt(variance)`) at
/// which a singular value counts as vanishing.
pub const SHRINK_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub variance: f64,
    pub rep: usize,
    pub seed: u64,
    pub steps: usize,
    pub converged: bool,
    pub final_loss: f64,
    /// Singular values of the final output with unobserved lines zeroed.
    pub sv: Vec<f64>,
    /// Final output at `SweepReport::positions`.
    pub entries: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub variances: Vec<f64>,
    pub positions: Vec<(usize, usize)>,
    /// Ordered by variance, then rep.
    pub rows: Vec<SweepRow>,
    /// Per rep, the rank left after discarding vanishing singular values.
    pub extrapolated_ranks: Vec<usize>,
    /// Per rep and singular value, the shrink factor per decade of scale between the two smallest variances.
    pub shrink_per_decade: Vec<Vec<f64>>,
}

impl SweepReport {
    pub fn rows_at(&self, variance: f64) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.variance == variance)
    }

    /// CSV with columns `variance,rep,seed,steps,converged,final_loss,sv_1..sv_d,w_i_j...`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(out);
        let d = self.rows.first().map_or(0, |r| r.sv.len());
        let mut header: Vec<String> = [
            "variance",
            "rep",
            "seed",
            "steps",
            "converged",
            "final_loss",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((1..=d).map(|k| format!("sv_{k}")));
        header.extend(self.positions.iter().map(|(i, j)| format!("w_{i}_{j}")));
        wtr.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                format!("{:e}", r.variance),
                r.rep.to_string(),
                r.seed.to_string(),
                r.steps.to_string(),
                r.converged.to_string(),
                format!("{:e}", r.final_loss),
            ];
            rec.extend(r.sv.iter().map(|x| format!("{x:e}")));
            rec.extend(r.entries.iter().map(|x| format!("{x:e}")));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Rank left after removing singular values that shrink by at least
/// [`SHRINK_FACTOR`] per decade of initialization scale between the two
/// smallest variances, i.e. that decay at least linearly in the scale.
///
/// `variances` must be strictly decreasing and `sv[v]` holds the singular
/// values at `variances[v]`. With fewer than two variances nothing is
/// extrapolated and every nonzero singular value counts.
pub fn extrapolated_rank(variances: &[f64], sv: &[Vec<f64>]) -> (usize, Vec<f64>) {
    let n = variances.len().min(sv.len());
    if n < 2 {
        let rank = sv
            .first()
            .map_or(0, |s| s.iter().filter(|&&x| x > 0.0).count());
        return (rank, Vec::new());
    }
    let (va, vb) = (variances[n - 2], variances[n - 1]);
    let decades = 0.5 * (va / vb).log10();
    let ratios: Vec<f64> = sv[n - 2]
        .iter()
        .zip(&sv[n - 1])
        .map(|(&a, &b)| {
            if b > 0.0 {
                (a / b).powf(1.0 / decades)
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let rank = ratios
        .iter()
        .zip(&sv[n - 1])
        .filter(|&(&r, &b)| b > 0.0 && r < SHRINK_FACTOR)
        .count();
    (rank, ratios)
}

fn check_variances(variances: &[f64]) -> Result<(), ExperimentError> {
    if variances.is_empty() || variances.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(ExperimentError::InvalidParameters(
            "variances must be positive and finite".into(),
        ));
    }
    if variances.windows(2).any(|w| w[1] >= w[0]) {
        return Err(ExperimentError::InvalidParameters(
            "variances must be strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// Trains `m` once per (variance, rep) from `base`, changing only the
/// initialization variance. Rep `k` uses the same seed at every variance, so
/// the initial directions agree and only their scale changes.
///
/// `positions` defaults to the unobserved entries.
pub fn init_scale_sweep(
    m: &IncompleteMatrix,
    variances: &[f64],
    reps: usize,
    positions: Option<&[(usize, usize)]>,
    base: &TrainConfig,
    seed: u64,
) -> Result<SweepReport, ExperimentError> {
    check_variances(variances)?;
    if reps == 0 {
        return Err(ExperimentError::InvalidParameters(
            "reps must be positive".into(),
        ));
    }
    let d = m.d();
    let positions: Vec<(usize, usize)> = match positions {
        Some(p) => {
            if p.iter().any(|&(i, j)| i >= d || j >= d) {
                return Err(ExperimentError::InvalidParameters(
                    "position out of range".into(),
                ));
            }
            p.to_vec()
        }
        None => (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .filter(|&(i, j)| !m.is_observed(i, j))
            .collect(),
    };
    let cells: Vec<(usize, usize)> = (0..variances.len())
        .flat_map(|v| (0..reps).map(move |r| (v, r)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(v, rep)| {
            let cfg = TrainConfig {
                init_variance: variances[v],
                rng_seed: cell_seed(seed, &[rep as u64]),
                ..base.clone()
            };
            let mut t = Trainer::new(m, cfg.clone())?;
            while !t.is_finished() {
                t.step()?;
            }
            let theta = t.theta();
            let w = theta.output();
            Ok(SweepRow {
                variance: variances[v],
                rep,
                seed: cfg.rng_seed,
                steps: t.step_index(),
                converged: t.is_converged(),
                final_loss: t.loss(),
                sv: singular_values(&theta.without_isolated(m).output())?,
                entries: positions.iter().map(|&(i, j)| w[(i, j)]).collect(),
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let mut extrapolated_ranks = Vec::with_capacity(reps);
    let mut shrink_per_decade = Vec::with_capacity(reps);
    for rep in 0..reps {
        let sv: Vec<Vec<f64>> = rows
            .iter()
            .filter(|r| r.rep == rep)
            .map(|r| r.sv.clone())
            .collect();
        let (rank, ratios) = extrapolated_rank(variances, &sv);
        extrapolated_ranks.push(rank);
        shrink_per_decade.push(ratios);
    }
    Ok(SweepReport {
        variances: variances.to_vec(),
        positions,
        rows,
        extrapolated_ranks,
        shrink_per_decade,
    })
}
