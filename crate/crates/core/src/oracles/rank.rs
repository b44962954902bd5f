use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{require_observations, Certificate, OracleError, OracleMethod, OracleResult};
use crate::linalg::{numerical_rank, ridge_least_squares, DenseMatrix, RankPolicy};
use crate::observation::IncompleteMatrix;

/// Relative tolerance on the log-magnitude consistency of non-tree edges.
const RANK1_CONSISTENCY_TOL: f64 = 1e-8;
const ALS_RIDGE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rank1Feasibility {
    pub feasible: bool,
    /// Rank-1 completion, present when feasible.
    pub witness: Option<DenseMatrix>,
}

/// Exact test for a rank-1 completion.
///
/// Row and column factors are propagated as (log-magnitude, sign) along a
/// breadth-first spanning tree of each component; every other edge must
/// reproduce its observation. Components are merged through the free
/// entries between them, and untouched rows and columns get zero factors.
pub fn rank1_completion_feasible(m: &IncompleteMatrix) -> Result<Rank1Feasibility, OracleError> {
    let d = m.d();
    let obs = m.observed();
    if let Some(&(row, col, _)) = obs.iter().find(|e| e.2 == 0.0) {
        return Err(OracleError::ZeroObservation { row, col });
    }
    // Vertices 0..d are rows, d..2d are columns.
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); 2 * d];
    for &(i, j, v) in &obs {
        adj[i].push((d + j, v));
        adj[d + j].push((i, v));
    }
    let mut log_mag: Vec<Option<f64>> = vec![None; 2 * d];
    let mut sign = vec![1.0; 2 * d];
    let mut members: Vec<Vec<usize>> = Vec::new();
    for root in 0..d {
        if log_mag[root].is_some() || adj[root].is_empty() {
            continue;
        }
        log_mag[root] = Some(0.0);
        let mut comp = vec![root];
        let mut queue = VecDeque::from([root]);
        while let Some(a) = queue.pop_front() {
            let la = log_mag[a].expect("visited");
            for &(b, v) in &adj[a] {
                let lb = v.abs().ln() - la;
                let sb = v.signum() * sign[a];
                match log_mag[b] {
                    None => {
                        log_mag[b] = Some(lb);
                        sign[b] = sb;
                        comp.push(b);
                        queue.push_back(b);
                    }
                    Some(existing) => {
                        if (existing - lb).abs() > RANK1_CONSISTENCY_TOL || sign[b] != sb {
                            return Ok(Rank1Feasibility {
                                feasible: false,
                                witness: None,
                            });
                        }
                    }
                }
            }
        }
        members.push(comp);
    }
    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    for comp in &members {
        // Balance row and column magnitudes within the component.
        let top = |rows: bool| {
            comp.iter()
                .filter(|&&v| (v < d) == rows)
                .map(|&v| log_mag[v].expect("visited"))
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let shift = 0.5 * (top(false) - top(true));
        for &v in comp {
            let l = log_mag[v].expect("visited");
            if v < d {
                x[v] = sign[v] * (l + shift).exp();
            } else {
                y[v - d] = sign[v] * (l - shift).exp();
            }
        }
    }
    let witness = DenseMatrix::from_fn(d, d, |i, j| x[i] * y[j]);
    Ok(Rank1Feasibility {
        feasible: true,
        witness: Some(witness),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinRankConfig {
    pub restarts: usize,
    /// Largest tolerated deviation on observed entries.
    pub fit_tol: f64,
    /// Alternating sweeps per restart.
    pub max_sweeps: usize,
    pub seed: u64,
}

impl Default for MinRankConfig {
    fn default() -> Self {
        MinRankConfig {
            restarts: 50,
            fit_tol: 1e-6,
            max_sweeps: 2000,
            seed: 0,
        }
    }
}

/// Smallest rank at which a completion is found: exact for ranks 0 and 1,
/// a heuristic upper bound from alternating least squares beyond that.
pub fn min_rank_search(
    m: &IncompleteMatrix,
    restarts: usize,
    fit_tol: f64,
) -> Result<OracleResult, OracleError> {
    min_rank_search_with(
        m,
        &MinRankConfig {
            restarts,
            fit_tol,
            ..MinRankConfig::default()
        },
    )
}

pub fn min_rank_search_with(
    m: &IncompleteMatrix,
    cfg: &MinRankConfig,
) -> Result<OracleResult, OracleError> {
    require_observations(m)?;
    if cfg.restarts == 0 || cfg.fit_tol.is_nan() || cfg.fit_tol <= 0.0 || cfg.max_sweeps == 0 {
        return Err(OracleError::InvalidConfig(
            "restarts, fit_tol and max_sweeps must be positive".into(),
        ));
    }
    let d = m.d();
    if m.max_abs_observed() == 0.0 {
        return Ok(OracleResult::new(
            OracleMethod::Rank1Exact,
            DenseMatrix::zeros(d, d),
            0.0,
            true,
            Certificate::Exact,
        )?);
    }
    if m.observed().iter().all(|e| e.2 != 0.0) {
        if let Some(w) = rank1_completion_feasible(m)?.witness {
            return Ok(OracleResult::new(
                OracleMethod::Rank1Exact,
                w,
                1.0,
                true,
                Certificate::Exact,
            )?);
        }
    }
    // Zero filling is always feasible, so its rank bounds the search.
    let fill = m.values().clone();
    let fill_rank = numerical_rank(&fill, &RankPolicy::default())?;
    for r in 2..fill_rank {
        let fits: Vec<(f64, DenseMatrix)> = (0..cfg.restarts)
            .into_par_iter()
            .map(|k| {
                let seed = cfg.seed ^ ((r as u64) << 32) ^ k as u64;
                als_restart(m, r, cfg.max_sweeps, cfg.fit_tol, seed)
            })
            .collect::<Result<_, _>>()?;
        let successes = fits.iter().filter(|f| f.0 <= cfg.fit_tol).count();
        if successes > 0 {
            let (best_residual, completion) = fits
                .into_iter()
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .expect("at least one restart");
            return Ok(OracleResult::new(
                OracleMethod::AlternatingLeastSquares,
                completion,
                r as f64,
                false,
                Certificate::HeuristicUpperBound {
                    restarts: cfg.restarts,
                    successes,
                    best_residual,
                },
            )?);
        }
    }
    Ok(OracleResult::new(
        OracleMethod::AlternatingLeastSquares,
        fill,
        fill_rank as f64,
        false,
        Certificate::HeuristicUpperBound {
            restarts: cfg.restarts,
            successes: 0,
            best_residual: 0.0,
        },
    )?)
}

/// One alternating-least-squares run at rank `r` on `X Y^T`; returns the
/// final largest observed deviation and the completion.
fn als_restart(
    m: &IncompleteMatrix,
    r: usize,
    max_sweeps: usize,
    fit_tol: f64,
    seed: u64,
) -> Result<(f64, DenseMatrix), OracleError> {
    let d = m.d();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = (m.observed_norm() / (d as f64 * (r as f64).sqrt())).sqrt();
    let normal = Normal::new(0.0, s).expect("finite scale");
    let mut x = DenseMatrix::from_fn(d, r, |_, _| normal.sample(&mut rng));
    let mut y = DenseMatrix::from_fn(d, r, |_, _| normal.sample(&mut rng));
    let rows: Vec<Vec<(usize, f64)>> = (0..d)
        .map(|i| {
            (0..d)
                .filter(|&j| m.is_observed(i, j))
                .map(|j| (j, m.values()[(i, j)]))
                .collect()
        })
        .collect();
    let cols: Vec<Vec<(usize, f64)>> = (0..d)
        .map(|j| {
            (0..d)
                .filter(|&i| m.is_observed(i, j))
                .map(|i| (i, m.values()[(i, j)]))
                .collect()
        })
        .collect();
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    for _ in 0..max_sweeps {
        solve_side(&mut x, &y, &rows)?;
        solve_side(&mut y, &x, &cols)?;
        let w = x.mul_transpose(&y)?;
        let err = m.max_observed_deviation(&w);
        if err <= fit_tol {
            return Ok((err, w));
        }
        if err < best * (1.0 - 1e-9) {
            best = err;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled > 50 {
                break;
            }
        }
    }
    let w = x.mul_transpose(&y)?;
    Ok((m.max_observed_deviation(&w), w))
}

/// Refits every row of `target` against the fixed factor `other`.
fn solve_side(
    target: &mut DenseMatrix,
    other: &DenseMatrix,
    lines: &[Vec<(usize, f64)>],
) -> Result<(), OracleError> {
    let r = target.cols();
    for (i, line) in lines.iter().enumerate() {
        if line.is_empty() {
            target.row_mut(i).fill(0.0);
            continue;
        }
        let design = DenseMatrix::from_fn(line.len(), r, |t, k| other[(line[t].0, k)]);
        let rhs: Vec<f64> = line.iter().map(|e| e.1).collect();
        let sol = ridge_least_squares(&design, &rhs, ALS_RIDGE)?;
        target.row_mut(i).copy_from_slice(&sol);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::singular_values;
    use crate::observation::ParseOptions;

    fn parse(s: &str) -> IncompleteMatrix {
        IncompleteMatrix::parse_text(s, ParseOptions::default()).unwrap()
    }

    #[test]
    fn rank1_examples() {
        let m = parse("1 2\n2 4");
        let r = rank1_completion_feasible(&m).unwrap();
        assert!(r.feasible);
        assert!(r.witness.unwrap().max_abs_diff(m.values()) < 1e-12);
        assert!(
            !rank1_completion_feasible(&parse("1 2\n2 5"))
                .unwrap()
                .feasible
        );

        let m1 = parse("1 2 *\n3 * *\n* * 5");
        let w = rank1_completion_feasible(&m1).unwrap().witness.unwrap();
        assert!(m1.max_observed_deviation(&w) < 1e-12);
        let sv = singular_values(&w).unwrap();
        assert!(sv[1] < 1e-12 * sv[0]);
    }

    #[test]
    fn rank1_handles_signs_and_isolated_lines() {
        let m = parse("-1 * 2\n* * *\n3 * -6");
        let w = rank1_completion_feasible(&m).unwrap().witness.unwrap();
        assert!(m.max_observed_deviation(&w) < 1e-12);
        assert_eq!(w.row(1), &[0.0, 0.0, 0.0]);
        assert!(
            !rank1_completion_feasible(&parse("-1 * 2\n* * *\n3 * 6"))
                .unwrap()
                .feasible
        );
    }

    #[test]
    fn min_rank_examples() {
        let m3 = parse("1 2 *\n3 4 *\n6 * 5");
        let r = min_rank_search(&m3, 10, 1e-8).unwrap();
        assert_eq!(r.objective, 2.0);
        assert!(!r.certified);
        assert!(r.observation_error(&m3) <= 1e-8);
        assert_eq!(r.rank, 2);

        let m1 = parse("1 2 *\n3 * *\n* * 5");
        let r = min_rank_search(&m1, 10, 1e-8).unwrap();
        assert_eq!(r.objective, 1.0);
        assert!(r.certified);

        let full = DenseMatrix::from_rows(&[[2.0, 1.0, 1.0], [1.0, 3.0, 1.0], [1.0, 1.0, 4.0]]);
        let r = min_rank_search(&IncompleteMatrix::fully_observed(full).unwrap(), 5, 1e-8).unwrap();
        assert_eq!(r.objective, 3.0);
    }

    #[test]
    fn deterministic_and_zero_observations() {
        let m = parse("1 2 *\n3 4 *\n6 * 5");
        let a = min_rank_search(&m, 8, 1e-8).unwrap();
        let b = min_rank_search(&m, 8, 1e-8).unwrap();
        assert_eq!(a, b);
        let z = IncompleteMatrix::parse_text(
            "0 *\n* 0",
            ParseOptions {
                allow_zero_observations: true,
            },
        )
        .unwrap();
        assert_eq!(min_rank_search(&z, 2, 1e-8).unwrap().objective, 0.0);
        assert!(matches!(
            rank1_completion_feasible(&z),
            Err(OracleError::ZeroObservation { .. })
        ));
    }
}
