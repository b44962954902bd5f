use serde::{Deserialize, Serialize};

use super::{require_observations, Certificate, OracleError, OracleMethod, OracleResult};
use crate::linalg::{nuclear_norm, svd, DenseMatrix, LinalgError};
use crate::observation::{build_observation_graph, connected_components, IncompleteMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexSolverConfig {
    pub max_iterations: usize,
    pub step_size: f64,
    pub primal_tolerance: f64,
    pub objective_tolerance: f64,
}

impl Default for ConvexSolverConfig {
    fn default() -> Self {
        ConvexSolverConfig {
            max_iterations: 500_000,
            step_size: 1.0,
            primal_tolerance: 1e-9,
            objective_tolerance: 1e-9,
        }
    }
}

impl ConvexSolverConfig {
    pub fn validate(&self) -> Result<(), OracleError> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if self.max_iterations == 0
            || !pos(self.step_size)
            || !pos(self.primal_tolerance)
            || !pos(self.objective_tolerance)
        {
            return Err(OracleError::InvalidConfig(
                "convex solver parameters must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Singular-value soft thresholding, the proximal map of `t |.|_*`.
fn shrink_singular_values(z: &DenseMatrix, t: f64) -> Result<DenseMatrix, LinalgError> {
    let s = svd(z)?;
    let (u, v) = (&s.left_vectors, &s.right_vectors);
    let kept: Vec<(usize, f64)> = s
        .singular_values
        .iter()
        .enumerate()
        .filter_map(|(k, &x)| (x > t).then_some((k, x - t)))
        .collect();
    Ok(DenseMatrix::from_fn(z.rows(), z.cols(), |i, j| {
        kept.iter().map(|&(k, x)| u[(i, k)] * x * v[(j, k)]).sum()
    }))
}

/// Overwrites the observed entries with their data.
fn project_onto_data(m: &IncompleteMatrix, w: &mut DenseMatrix) {
    for (i, j, v) in m.observed() {
        w[(i, j)] = v;
    }
}

/// Minimum nuclear norm completion by Douglas-Rachford splitting between
/// singular-value thresholding and the data-consistency projection.
///
/// The returned completion is the projected iterate, so it matches the
/// observations exactly.
pub fn min_nuclear_norm_general(
    m: &IncompleteMatrix,
    cfg: &ConvexSolverConfig,
) -> Result<OracleResult, OracleError> {
    require_observations(m)?;
    cfg.validate()?;
    let scale = m.observed_norm().max(1.0);
    let mut z = m.values().clone();
    let mut gap = f64::INFINITY;
    let mut prev_obj = f64::INFINITY;
    for it in 1..=cfg.max_iterations {
        let x = shrink_singular_values(&z, cfg.step_size)?;
        let mut y = x.scale(2.0);
        y.axpy(-1.0, &z);
        project_onto_data(m, &mut y);
        let diff = &y - &x;
        z.axpy(1.0, &diff);
        gap = diff.frobenius_norm();
        // The objective is only evaluated once the iterates have settled.
        if gap < cfg.primal_tolerance * scale {
            let obj = nuclear_norm(&y)?;
            if (obj - prev_obj).abs() < cfg.objective_tolerance * scale
                || (obj - nuclear_norm(&x)?).abs() < cfg.objective_tolerance * scale
            {
                return Ok(OracleResult::new(
                    OracleMethod::DouglasRachford,
                    y,
                    obj,
                    true,
                    Certificate::Convex {
                        iterations: it,
                        primal_gap: gap,
                    },
                )?);
            }
            prev_obj = obj;
        }
    }
    Err(OracleError::NotConverged {
        iterations: cfg.max_iterations,
        gap,
    })
}

/// Closed form when every component of the observation graph is complete
/// bipartite: the sum of the blocks' nuclear norms, attained by placing the
/// blocks and filling zeros elsewhere.
pub fn min_nuclear_norm_bipartite_blocks(
    m: &IncompleteMatrix,
) -> Result<OracleResult, OracleError> {
    require_observations(m)?;
    let comps = connected_components(&build_observation_graph(m));
    if let Some(bad) = comps.components.iter().find(|c| !c.is_complete_bipartite()) {
        return Err(OracleError::NotCompleteBipartite(bad.clone()));
    }
    let d = m.d();
    let mut completion = DenseMatrix::zeros(d, d);
    let mut norms = Vec::with_capacity(comps.len());
    for c in &comps.components {
        norms.push(nuclear_norm(&m.values().select(&c.rows, &c.cols))?);
        for &(i, j) in &c.edges {
            completion[(i, j)] = m.values()[(i, j)];
        }
    }
    let objective = norms.iter().sum();
    Ok(OracleResult::new(
        OracleMethod::BipartiteBlocks,
        completion,
        objective,
        true,
        Certificate::BlockSums {
            block_nuclear_norms: norms,
        },
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observation::ParseOptions;

    fn parse(s: &str) -> IncompleteMatrix {
        IncompleteMatrix::parse_text(s, ParseOptions::default()).unwrap()
    }

    const M2_NUCLEAR: f64 = 10.830_951_894_845_3;

    #[test]
    fn m2_closed_form() {
        assert!((34f64.sqrt() + 5.0 - M2_NUCLEAR).abs() < 1e-12);
        let m = parse("1 2 *\n3 4 *\n* * 5");
        let r = min_nuclear_norm_bipartite_blocks(&m).unwrap();
        assert!((r.objective - M2_NUCLEAR).abs() < 1e-10);
        assert!((r.nuclear_norm - r.objective).abs() < 1e-10);
        assert_eq!(r.observation_error(&m), 0.0);
        let g = min_nuclear_norm_general(&m, &ConvexSolverConfig::default()).unwrap();
        assert!((g.objective - M2_NUCLEAR).abs() < 1e-4, "{}", g.objective);
        assert!(g.observation_error(&m) <= 1e-8);
    }

    #[test]
    fn diagonal_and_full() {
        let m = parse("2 *\n* -3");
        let b = min_nuclear_norm_bipartite_blocks(&m).unwrap();
        assert_eq!(b.objective, 5.0);
        let g = min_nuclear_norm_general(&m, &ConvexSolverConfig::default()).unwrap();
        assert!((g.objective - 5.0).abs() < 1e-6);
        assert!(
            g.completion
                .max_abs_diff(&DenseMatrix::from_diagonal(&[2.0, -3.0]))
                < 1e-6
        );

        let full = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let m = IncompleteMatrix::fully_observed(full.clone()).unwrap();
        let want = nuclear_norm(&full).unwrap();
        assert!((want - 34f64.sqrt()).abs() < 1e-12);
        let g = min_nuclear_norm_general(&m, &ConvexSolverConfig::default()).unwrap();
        assert!((g.objective - want).abs() < 1e-9);
        let b = min_nuclear_norm_bipartite_blocks(&m).unwrap();
        assert!((b.objective - want).abs() < 1e-12);
    }

    #[test]
    fn generic_disconnected_is_rejected() {
        let m = parse("1 2 *\n3 * *\n* * 5");
        assert!(matches!(
            min_nuclear_norm_bipartite_blocks(&m),
            Err(OracleError::NotCompleteBipartite(c)) if c.rows == vec![0, 1]
        ));
    }

    #[test]
    fn soft_threshold_matches_definition() {
        let z = DenseMatrix::from_diagonal(&[3.0, 0.5]);
        let x = shrink_singular_values(&z, 1.0).unwrap();
        assert!(x.max_abs_diff(&DenseMatrix::from_diagonal(&[2.0, 0.0])) < 1e-15);
    }
}
