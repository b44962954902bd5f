use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::scenario::{ExpectedProperty, OracleKind, Scenario};
use super::svg::{line_chart, Series};
use super::ExperimentError;
use crate::dynamics::{
    himt_check, plateau_ranks, sub_manifold_membership, train_observed, write_trajectory_csv,
    FactorPair, PlateauRecord, TrainConfig, Trajectory,
};
use crate::landscape::{
    assumption2_check, classify_critical_point, default_critical_tol, escape_direction,
    leading_span, refine_critical_point, CriticalPointClass, LandscapeError, DEFAULT_GAP_TOL,
};
use crate::linalg::{dot, singular_values, svd};
use crate::observation::{
    build_observation_graph, classify_connectivity, connected_components, ConnectivityClass,
    IncompleteMatrix,
};
use crate::oracles::{
    glrl, min_nuclear_norm_bipartite_blocks, min_nuclear_norm_general, min_rank_search,
    ConvexSolverConfig, OracleResult,
};

/// Tolerance on the restricted-Hessian eigenvalue for second-order stationarity on the manifold.
const RESTRICTED_CURVATURE_TOL: f64 = 1e-6;
/// Refinement aims this far below the classification tolerance.
const REFINE_TARGET_FACTOR: f64 = 1e-3;
const MIN_RANK_RESTARTS: usize = 50;
const MIN_RANK_FIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauSummary {
    pub start_step: usize,
    pub end_step: usize,
    pub effective_rank: usize,
    pub min_grad_norm: f64,
    pub terminal: bool,
}

/// Critical-point classification of one plateau.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub plateau: usize,
    pub rank: usize,
    pub refined_grad_norm: f64,
    pub class: Option<CriticalPointClass>,
    /// Neither a strict saddle nor a global minimum.
    pub violation: bool,
    pub error: Option<String>,
}

/// Escape from plateau `from_plateau` towards the next plateau or the end of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionCheck {
    pub from_plateau: usize,
    pub from_rank: usize,
    pub to_rank: usize,
    /// Rank of the critical point the escape is predicted from.
    pub critical_rank: usize,
    /// `(sigma_1 - sigma_2) / sigma_1` of the residual at the refined critical point.
    pub relative_gap: f64,
    pub unique_top_singular: bool,
    pub restricted_min_eigenvalue: f64,
    pub second_order_on_manifold: bool,
    pub refined: bool,
    pub ill_defined: bool,
    pub qualifying: bool,
    pub alignment_u: Option<f64>,
    pub alignment_v: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyOutcome {
    pub property: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub connectivity: Option<ConnectivityClass>,
    pub learned_rank: Option<usize>,
    pub learned_nuclear_norm: Option<f64>,
    pub oracle_rank: Option<usize>,
    pub oracle_nuclear_norm: Option<f64>,
    pub final_output: Option<Vec<Vec<f64>>>,
    pub final_loss: Option<f64>,
    pub steps: usize,
    pub converged: bool,
    pub plateaus: Vec<PlateauSummary>,
    pub audit: Vec<AuditEntry>,
    pub transitions: Vec<TransitionCheck>,
    /// Recorded steps seen by the HIMT monitor.
    pub himt_records: usize,
    pub properties: Vec<PropertyOutcome>,
    /// File names inside the output directory.
    pub artifacts: Vec<PathBuf>,
    pub diagnostics: Vec<String>,
    pub passed: bool,
}

impl RunReport {
    fn empty(name: &str) -> Self {
        RunReport {
            scenario: name.to_string(),
            connectivity: None,
            learned_rank: None,
            learned_nuclear_norm: None,
            oracle_rank: None,
            oracle_nuclear_norm: None,
            final_output: None,
            final_loss: None,
            steps: 0,
            converged: false,
            plateaus: Vec::new(),
            audit: Vec::new(),
            transitions: Vec::new(),
            himt_records: 0,
            properties: Vec::new(),
            artifacts: Vec::new(),
            diagnostics: Vec::new(),
            passed: false,
        }
    }

    pub fn failed_properties(&self) -> impl Iterator<Item = &PropertyOutcome> {
        self.properties.iter().filter(|p| !p.passed)
    }
}

/// Oracle outputs collected for a scenario.
#[derive(Debug, Default)]
struct OracleRun {
    blocks: Option<OracleResult>,
    convex: Option<OracleResult>,
    min_rank: Option<OracleResult>,
    glrl: Option<OracleResult>,
}

impl OracleRun {
    fn nuclear(&self) -> Option<f64> {
        self.blocks
            .as_ref()
            .or(self.convex.as_ref())
            .map(|r| r.objective)
    }

    fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (key, r) in [
            ("nuclear_blocks", &self.blocks),
            ("nuclear_convex", &self.convex),
            ("min_rank", &self.min_rank),
            ("glrl", &self.glrl),
        ] {
            if let Some(r) = r {
                map.insert(key.to_string(), r.to_json());
            }
        }
        serde_json::Value::Object(map)
    }
}

/// HIMT monitor readings at one recorded step.
#[derive(Debug, Clone, Copy)]
struct HimtReading {
    ranks_agree: bool,
    max_angle: f64,
}

/// Everything `evaluate` needs from a finished run.
struct RunData<'a> {
    m: &'a IncompleteMatrix,
    cfg: &'a TrainConfig,
    theta: FactorPair,
    traj: Trajectory,
    himt: Vec<HimtReading>,
    oracles: OracleRun,
}

/// Trains the scenario, runs its oracles and monitors, evaluates the
/// expected properties and, when `out` is given, writes `trajectory.csv`,
/// `oracle.json`, `loss.svg`, `sv.svg` and `report.json` there.
///
/// Component failures do not abort: they mark the report failed and are
/// listed in `diagnostics`.
pub fn run_scenario(s: &Scenario, out: Option<&Path>) -> RunReport {
    let mut report = RunReport::empty(&s.name);
    let m = match s.instance.resolve() {
        Ok(m) => m,
        Err(e) => {
            report.diagnostics.push(format!("instance: {e}"));
            return report;
        }
    };
    match classify_connectivity(&m) {
        Ok(c) => report.connectivity = Some(c),
        Err(e) => report.diagnostics.push(format!("connectivity: {e}")),
    }
    let cfg = s.train_config(&m);
    let oracles = run_oracles(&m, &cfg, &s.oracles, &mut report.diagnostics);
    report.oracle_rank = oracles.min_rank.as_ref().map(|r| r.rank);
    report.oracle_nuclear_norm = oracles.nuclear();

    let mut himt = Vec::new();
    let mut himt_error = None;
    let trained = train_observed(&m, &cfg, |_, theta| {
        match himt_check(&theta.without_isolated(&m), &cfg.himt_policy, f64::INFINITY) {
            Ok(h) => himt.push(HimtReading {
                ranks_agree: h.holds,
                max_angle: h.max_angle,
            }),
            Err(e) => himt_error = Some(e.to_string()),
        }
    });
    if let Some(e) = himt_error {
        report.diagnostics.push(format!("himt monitor: {e}"));
    }
    let (theta, traj) = match trained {
        Ok(x) => x,
        Err(e) => {
            report.diagnostics.push(format!("training: {e}"));
            finish(&mut report, out, None, &oracles);
            return report;
        }
    };
    report.himt_records = himt.len();
    report.steps = traj.final_step();
    report.converged = traj.converged;
    report.final_loss = traj.loss.last().copied();
    let view = theta.without_isolated(&m).output();
    report.final_output = Some(theta.output().to_rows());
    match singular_values(&view) {
        Ok(sv) => {
            report.learned_rank = Some(cfg.rank_policy.rank_of(&sv));
            report.learned_nuclear_norm = Some(sv.iter().sum());
        }
        Err(e) => report.diagnostics.push(format!("final spectrum: {e}")),
    }
    report.plateaus = traj
        .plateaus
        .iter()
        .map(|p| PlateauSummary {
            start_step: p.start_step,
            end_step: p.end_step,
            effective_rank: p.effective_rank,
            min_grad_norm: p.min_grad_norm,
            terminal: p.terminal,
        })
        .collect();
    report.audit = audit_plateaus(&m, &cfg, &traj.plateaus);
    report.transitions =
        check_transitions(&m, &cfg, &traj.plateaus, report.learned_rank.unwrap_or(0));

    let data = RunData {
        m: &m,
        cfg: &cfg,
        theta,
        traj,
        himt,
        oracles,
    };
    report.properties = s
        .expected
        .iter()
        .map(|p| {
            let (passed, detail) = evaluate(p, &data, &report);
            PropertyOutcome {
                property: p.label(),
                passed,
                detail,
            }
        })
        .collect();
    finish(&mut report, out, Some(&data.traj), &data.oracles);
    report
}

fn finish(
    report: &mut RunReport,
    out: Option<&Path>,
    traj: Option<&Trajectory>,
    oracles: &OracleRun,
) {
    if let Some(dir) = out {
        if let Err(e) = write_artifacts(report, dir, traj, oracles) {
            report.diagnostics.push(format!("artifacts: {e}"));
        }
    }
    report.passed = report.diagnostics.is_empty() && report.properties.iter().all(|p| p.passed);
    if let Some(dir) = out {
        let path = dir.join("report.json");
        let res = File::create(&path)
            .map_err(ExperimentError::from)
            .and_then(|f| Ok(serde_json::to_writer_pretty(BufWriter::new(f), &*report)?));
        if let Err(e) = res {
            report.diagnostics.push(format!("report.json: {e}"));
            report.passed = false;
        }
    }
}

fn write_artifacts(
    report: &mut RunReport,
    dir: &Path,
    traj: Option<&Trajectory>,
    oracles: &OracleRun,
) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir)?;
    if let Some(traj) = traj {
        let name = "trajectory.csv";
        let path = dir.join(name);
        write_trajectory_csv(traj, BufWriter::new(File::create(&path)?))?;
        report.artifacts.push(name.into());
        let steps: Vec<f64> = traj.steps.iter().map(|&s| s as f64).collect();
        let loss = Series {
            label: "loss".into(),
            points: steps
                .iter()
                .copied()
                .zip(traj.loss.iter().copied())
                .collect(),
        };
        let name = "loss.svg";
        let path = dir.join(name);
        fs::write(
            &path,
            line_chart(&format!("{}: loss", report.scenario), "step", &[loss]),
        )?;
        report.artifacts.push(name.into());
        let sv: Vec<Series> = (0..traj.d)
            .map(|k| Series {
                label: format!("sigma_{}(W)", k + 1),
                points: steps
                    .iter()
                    .zip(&traj.sv_w)
                    .map(|(&s, v)| (s, v[k]))
                    .collect(),
            })
            .collect();
        let name = "sv.svg";
        let path = dir.join(name);
        fs::write(
            &path,
            line_chart(
                &format!("{}: singular values", report.scenario),
                "step",
                &sv,
            ),
        )?;
        report.artifacts.push(name.into());
    }
    let name = "oracle.json";
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(&oracles.to_json())?)?;
    report.artifacts.push(name.into());
    report.artifacts.push("report.json".into());
    Ok(())
}

fn run_oracles(
    m: &IncompleteMatrix,
    cfg: &TrainConfig,
    kinds: &[OracleKind],
    diagnostics: &mut Vec<String>,
) -> OracleRun {
    let mut run = OracleRun::default();
    let mut note =
        |what: &str, e: &dyn std::fmt::Display| diagnostics.push(format!("{what} oracle: {e}"));
    for kind in kinds {
        match kind {
            OracleKind::NuclearNorm => {
                let all_cb =
                    connected_components(&build_observation_graph(m)).all_complete_bipartite();
                if all_cb {
                    match min_nuclear_norm_bipartite_blocks(m) {
                        Ok(r) => run.blocks = Some(r),
                        Err(e) => note("block nuclear norm", &e),
                    }
                }
                match min_nuclear_norm_general(m, &ConvexSolverConfig::default()) {
                    Ok(r) => run.convex = Some(r),
                    Err(e) => note("convex nuclear norm", &e),
                }
            }
            OracleKind::MinRank => match min_rank_search(m, MIN_RANK_RESTARTS, MIN_RANK_FIT_TOL) {
                Ok(r) => run.min_rank = Some(r),
                Err(e) => note("min rank", &e),
            },
            OracleKind::Glrl => match glrl(m, cfg) {
                Ok(g) => run.glrl = Some(g.result),
                Err(e) => note("glrl", &e),
            },
        }
    }
    run
}

/// Plateau-policy rank of the parameters a plateau's critical point is refined from.
///
/// A slow final escape can keep the gradient below the plateau threshold, so
/// the mid-plateau rank may lag behind the minimum-gradient snapshot.
fn critical_rank(
    m: &IncompleteMatrix,
    cfg: &TrainConfig,
    p: &PlateauRecord,
) -> Result<usize, ExperimentError> {
    let sv = singular_values(&p.critical_theta.without_isolated(m).output())?;
    Ok(cfg.plateau_rank_policy.rank_of(&sv))
}

fn audit_plateaus(
    m: &IncompleteMatrix,
    cfg: &TrainConfig,
    plateaus: &[PlateauRecord],
) -> Vec<AuditEntry> {
    let tol = default_critical_tol(m);
    plateaus
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut entry = AuditEntry {
                plateau: i,
                rank: 0,
                refined_grad_norm: f64::NAN,
                class: None,
                violation: false,
                error: None,
            };
            let refined = match critical_rank(m, cfg, p).and_then(|k| {
                entry.rank = k;
                Ok(refine_critical_point(
                    &p.critical_theta,
                    m,
                    k,
                    REFINE_TARGET_FACTOR * tol,
                )?)
            }) {
                Ok(r) => r,
                Err(e) => {
                    entry.error = Some(e.to_string());
                    return entry;
                }
            };
            entry.refined_grad_norm = refined.grad_norm;
            match classify_critical_point(&refined.theta, m, tol) {
                Ok(c) => entry.class = Some(c),
                Err(e) => {
                    entry.violation = matches!(e, LandscapeError::UnclassifiableCriticalPoint { .. });
                    entry.error = Some(e.to_string());
                }
            }
            entry
        })
        .collect()
}

fn check_transitions(
    m: &IncompleteMatrix,
    cfg: &TrainConfig,
    plateaus: &[PlateauRecord],
    final_rank: usize,
) -> Vec<TransitionCheck> {
    let tol = default_critical_tol(m);
    plateaus
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.terminal)
        .map(|(i, p)| {
            let to_rank = plateaus.get(i + 1).map_or(final_rank, |q| q.effective_rank);
            let mut t = TransitionCheck {
                from_plateau: i,
                from_rank: p.effective_rank,
                to_rank,
                critical_rank: p.effective_rank,
                relative_gap: f64::NAN,
                unique_top_singular: false,
                restricted_min_eigenvalue: f64::NAN,
                second_order_on_manifold: false,
                refined: false,
                ill_defined: true,
                qualifying: false,
                alignment_u: None,
                alignment_v: None,
                error: None,
            };
            if let Err(e) = fill_transition(&mut t, m, cfg, p, tol) {
                t.error = Some(e.to_string());
                t.qualifying = false;
            }
            t
        })
        .collect()
}

fn fill_transition(
    t: &mut TransitionCheck,
    m: &IncompleteMatrix,
    cfg: &TrainConfig,
    p: &PlateauRecord,
    tol: f64,
) -> Result<(), ExperimentError> {
    let k = critical_rank(m, cfg, p)?;
    t.critical_rank = k;
    let refined = refine_critical_point(&p.critical_theta, m, k, REFINE_TARGET_FACTOR * tol)?;
    t.refined = refined.grad_norm <= tol;
    let esc = escape_direction(&refined.theta, m)?;
    t.ill_defined = esc.ill_defined;
    t.relative_gap = if esc.sigma1 > 0.0 {
        esc.gap / esc.sigma1
    } else {
        0.0
    };
    t.unique_top_singular = esc.sigma1 > 0.0 && t.relative_gap > DEFAULT_GAP_TOL;
    let q = leading_span(&refined.theta, k)?;
    let curv = assumption2_check(&refined.theta, m, &q, RESTRICTED_CURVATURE_TOL)?;
    t.restricted_min_eigenvalue = curv.min_eigenvalue;
    t.second_order_on_manifold = curv.holds;
    t.qualifying =
        t.unique_top_singular && t.second_order_on_manifold && t.refined && !t.ill_defined;
    if let Some(exit) = &p.exit_theta {
        let s = svd(&exit.without_isolated(m).output())?;
        if k < s.singular_values.len() {
            t.alignment_u = Some(dot(&s.u(k), &esc.u1).abs());
            t.alignment_v = Some(dot(&s.v(k), &esc.v1).abs());
        }
    }
    Ok(())
}

fn first_ranked_plateau<'a>(data: &'a RunData<'_>) -> Option<&'a PlateauRecord> {
    data.traj.plateaus.iter().find(|p| p.effective_rank >= 1)
}

fn evaluate(p: &ExpectedProperty, data: &RunData<'_>, report: &RunReport) -> (bool, String) {
    use ExpectedProperty as P;
    let missing = |what: &str| (false, format!("{what} unavailable"));
    let w = data.theta.output();
    match p {
        P::Connectivity { class } => match report.connectivity {
            Some(c) => (c == *class, format!("observed {c}")),
            None => missing("connectivity"),
        },
        P::FinalRank { rank } => match report.learned_rank {
            Some(r) => (r == *rank, format!("learned rank {r}")),
            None => missing("learned rank"),
        },
        P::LearnedRankEqualsOracle | P::LearnedRankExceedsOracle => {
            match (report.learned_rank, report.oracle_rank) {
                (Some(l), Some(o)) => {
                    let ok = if matches!(p, P::LearnedRankEqualsOracle) {
                        l == o
                    } else {
                        l > o
                    };
                    (ok, format!("learned {l}, oracle {o}"))
                }
                _ => missing("learned or oracle rank"),
            }
        }
        P::NuclearNormNear { value, tol } => match report.learned_nuclear_norm {
            Some(x) => ((x - value).abs() <= *tol, format!("learned {x:.9}")),
            None => missing("learned nuclear norm"),
        },
        P::NuclearNormExceedsOracle { margin } => {
            match (report.learned_nuclear_norm, report.oracle_nuclear_norm) {
                (Some(l), Some(o)) => (l > o + margin, format!("learned {l:.6}, oracle {o:.6}")),
                _ => missing("nuclear norms"),
            }
        }
        P::EntryNear {
            row,
            col,
            value,
            tol,
        } => {
            if *row >= w.rows() || *col >= w.cols() {
                return (false, "entry out of range".into());
            }
            let x = w[(*row, *col)];
            (
                (x - value).abs() <= *tol,
                format!("W[{row},{col}] = {x:.6}"),
            )
        }
        P::SymmetricPairs { pairs, tol } => {
            let worst = pairs
                .iter()
                .filter(|&&(i, j)| i < w.rows() && j < w.cols())
                .map(|&(i, j)| (w[(i, j)] - w[(j, i)]).abs())
                .fold(0.0, f64::max);
            (worst <= *tol, format!("max asymmetry {worst:.3e}"))
        }
        P::PlateauRanks { ranks } => {
            let got = plateau_ranks(&data.traj.plateaus);
            (got == *ranks, format!("observed {got:?}"))
        }
        P::RankIncrementsByOne => {
            let considered: Vec<_> = report
                .transitions
                .iter()
                .filter(|t| t.unique_top_singular)
                .collect();
            let bad: Vec<String> = considered
                .iter()
                .filter(|t| t.to_rank != t.from_rank + 1)
                .map(|t| format!("{}->{}", t.from_rank, t.to_rank))
                .collect();
            (
                bad.is_empty(),
                format!(
                    "{} transitions with a unique top residual singular value; bad: {bad:?}",
                    considered.len()
                ),
            )
        }
        P::HimtFraction {
            min_fraction,
            angle_tol,
        } => {
            if data.himt.is_empty() {
                return missing("HIMT readings");
            }
            let holds = data
                .himt
                .iter()
                .filter(|h| h.ranks_agree && h.max_angle <= *angle_tol)
                .count();
            let frac = holds as f64 / data.himt.len() as f64;
            (
                frac >= *min_fraction,
                format!("{holds}/{} = {frac:.4}", data.himt.len()),
            )
        }
        P::FirstPlateauEntries { entries, tol } => match first_ranked_plateau(data) {
            Some(pl) => {
                let o = &pl.output_snapshot;
                let worst = entries
                    .iter()
                    .map(|&(i, j, v)| (o[(i, j)] - v).abs())
                    .fold(0.0, f64::max);
                (
                    worst <= *tol,
                    format!("max deviation {worst:.3e} at rank {}", pl.effective_rank),
                )
            }
            None => missing("ranked plateau"),
        },
        P::FirstPlateauSubManifold { component, tol } => {
            let comps = connected_components(&build_observation_graph(data.m));
            let (Some(pl), Some(comp)) =
                (first_ranked_plateau(data), comps.components.get(*component))
            else {
                return missing("ranked plateau or component");
            };
            let basis = match leading_span(&pl.theta, pl.effective_rank) {
                Ok(q) => (0..q.cols()).map(|k| q.column(k)).collect::<Vec<_>>(),
                Err(e) => return (false, e.to_string()),
            };
            match sub_manifold_membership(&pl.theta, comp, &basis, *tol) {
                Ok(ok) => (ok, format!("rows {:?}, cols {:?}", comp.rows, comp.cols)),
                Err(e) => (false, e.to_string()),
            }
        }
        P::ConvexMatchesBlocks { tol } => match (&data.oracles.blocks, &data.oracles.convex) {
            (Some(b), Some(c)) => {
                let diff = (b.objective - c.objective).abs();
                (
                    diff <= *tol,
                    format!("blocks {:.9}, convex {:.9}", b.objective, c.objective),
                )
            }
            _ => missing("block or convex oracle"),
        },
        P::GlrlOutput { rows, tol } => match &data.oracles.glrl {
            Some(g) => {
                let c = &g.completion;
                let shape_ok = rows.len() == c.rows() && rows.iter().all(|r| r.len() == c.cols());
                if !shape_ok {
                    return (false, "shape mismatch".into());
                }
                let worst = rows
                    .iter()
                    .enumerate()
                    .flat_map(|(i, r)| {
                        r.iter()
                            .enumerate()
                            .map(move |(j, &v)| (c[(i, j)] - v).abs())
                    })
                    .fold(0.0, f64::max);
                (worst <= *tol, format!("max deviation {worst:.3e}"))
            }
            None => missing("GLRL output"),
        },
        P::SimultaneousCrossing { rel_tol } => {
            let cutoff = data.cfg.plateau_rank_policy.absolute_threshold;
            let crossing = |k: usize| {
                data.traj
                    .sv_w
                    .iter()
                    .position(|sv| sv.get(k).is_some_and(|&x| x > cutoff))
                    .map(|r| data.traj.steps[r])
            };
            match (crossing(0), crossing(1)) {
                (Some(a), Some(b)) => {
                    let rel = a.abs_diff(b) as f64 / a.max(b).max(1) as f64;
                    (
                        rel <= *rel_tol,
                        format!("steps {a} and {b}, relative gap {rel:.4}"),
                    )
                }
                _ => (false, "a singular value never crossed the cutoff".into()),
            }
        }
        P::CriticalPointsClassified => {
            let violations = report.audit.iter().filter(|a| a.violation).count();
            let unclassified = report.audit.iter().filter(|a| a.class.is_none()).count();
            (
                violations == 0 && unclassified == 0 && !report.audit.is_empty(),
                format!(
                    "{} plateaus, {violations} violations, {unclassified} unclassified",
                    report.audit.len()
                ),
            )
        }
        P::EscapeAlignment { min_alignment } => {
            let q: Vec<_> = report.transitions.iter().filter(|t| t.qualifying).collect();
            let bad = q
                .iter()
                .filter(|t| match (t.alignment_u, t.alignment_v) {
                    (Some(u), Some(v)) => u < *min_alignment || v < *min_alignment,
                    _ => true,
                })
                .count();
            let worst = q
                .iter()
                .flat_map(|t| [t.alignment_u, t.alignment_v])
                .map(|a| a.unwrap_or(0.0))
                .fold(1.0, f64::min);
            (
                bad == 0,
                format!(
                    "{} qualifying transitions, worst alignment {worst:.6}",
                    q.len()
                ),
            )
        }
    }
}
