use serde::{Deserialize, Serialize};

use super::random::generate_random_instance;
use super::ExperimentError;
use crate::dynamics::TrainConfig;
use crate::linalg::DenseMatrix;
use crate::observation::{ConnectivityClass, IncompleteMatrix, ParseOptions};

/// Either a literal instance or a seeded low-rank generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSpec {
    Fixed(IncompleteMatrix),
    Generated {
        d: usize,
        r: usize,
        n: usize,
        seed: u64,
    },
}

impl InstanceSpec {
    pub fn resolve(&self) -> Result<IncompleteMatrix, ExperimentError> {
        match self {
            InstanceSpec::Fixed(m) => Ok(m.clone()),
            InstanceSpec::Generated { d, r, n, seed } => {
                generate_random_instance(*d, *r, *n, *seed)
            }
        }
    }
}

/// Per-scenario changes to the instance-scaled training defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainOverrides {
    pub init_variance: Option<f64>,
    pub learning_rate: Option<f64>,
    pub max_steps: Option<usize>,
    pub seed: Option<u64>,
    pub plateau_grad_threshold: Option<f64>,
    pub record_stride: Option<usize>,
}

impl TrainOverrides {
    pub fn apply(&self, mut cfg: TrainConfig) -> TrainConfig {
        if let Some(v) = self.init_variance {
            cfg.init_variance = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.max_steps {
            cfg.max_steps = v;
        }
        if let Some(v) = self.seed {
            cfg.rng_seed = v;
        }
        if let Some(v) = self.plateau_grad_threshold {
            cfg.plateau_grad_threshold = v;
        }
        if let Some(v) = self.record_stride {
            cfg.record_stride = v;
        }
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    NuclearNorm,
    MinRank,
    Glrl,
}

/// A property checked against a finished run. Entry positions are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExpectedProperty {
    Connectivity {
        class: ConnectivityClass,
    },
    FinalRank {
        rank: usize,
    },
    LearnedRankEqualsOracle,
    LearnedRankExceedsOracle,
    NuclearNormNear {
        value: f64,
        tol: f64,
    },
    NuclearNormExceedsOracle {
        margin: f64,
    },
    EntryNear {
        row: usize,
        col: usize,
        value: f64,
        tol: f64,
    },
    SymmetricPairs {
        pairs: Vec<(usize, usize)>,
        tol: f64,
    },
    PlateauRanks {
        ranks: Vec<usize>,
    },
    /// Plateau rank grows by exactly one across every transition whose
    /// preceding critical point has a unique top residual singular value.
    RankIncrementsByOne,
    HimtFraction {
        min_fraction: f64,
        angle_tol: f64,
    },
    FirstPlateauEntries {
        entries: Vec<(usize, usize, f64)>,
        tol: f64,
    },
    /// The first rank-k plateau (k >= 1) lies on the sub-manifold of the given component.
    FirstPlateauSubManifold {
        component: usize,
        tol: f64,
    },
    ConvexMatchesBlocks {
        tol: f64,
    },
    GlrlOutput {
        rows: Vec<Vec<f64>>,
        tol: f64,
    },
    /// Both singular values of W cross the plateau rank cutoff at record steps
    /// within `rel_tol` of each other.
    SimultaneousCrossing {
        rel_tol: f64,
    },
    /// Every refined plateau critical point is a strict saddle or a global minimum.
    CriticalPointsClassified,
    /// Escape alignment at every qualifying transition.
    EscapeAlignment {
        min_alignment: f64,
    },
}

impl ExpectedProperty {
    pub fn label(&self) -> String {
        match self {
            ExpectedProperty::Connectivity { class } => format!("connectivity = {class}"),
            ExpectedProperty::FinalRank { rank } => format!("final rank = {rank}"),
            ExpectedProperty::LearnedRankEqualsOracle => "learned rank = oracle rank".into(),
            ExpectedProperty::LearnedRankExceedsOracle => "learned rank > oracle rank".into(),
            ExpectedProperty::NuclearNormNear { value, tol } => {
                format!("nuclear norm = {value} within {tol:e}")
            }
            ExpectedProperty::NuclearNormExceedsOracle { margin } => {
                format!("nuclear norm > oracle + {margin:e}")
            }
            ExpectedProperty::EntryNear {
                row,
                col,
                value,
                tol,
            } => {
                format!("W[{row},{col}] = {value} within {tol:e}")
            }
            ExpectedProperty::SymmetricPairs { tol, .. } => {
                format!("symmetric pairs within {tol:e}")
            }
            ExpectedProperty::PlateauRanks { ranks } => format!("plateau ranks {ranks:?}"),
            ExpectedProperty::RankIncrementsByOne => "rank increments by one".into(),
            ExpectedProperty::HimtFraction {
                min_fraction,
                angle_tol,
            } => {
                format!("HIMT holds at >= {min_fraction} of records (angle {angle_tol:e})")
            }
            ExpectedProperty::FirstPlateauEntries { tol, .. } => {
                format!("first plateau entries within {tol:e}")
            }
            ExpectedProperty::FirstPlateauSubManifold { component, tol } => {
                format!("first plateau on component {component} sub-manifold within {tol:e}")
            }
            ExpectedProperty::ConvexMatchesBlocks { tol } => {
                format!("convex oracle = block value within {tol:e}")
            }
            ExpectedProperty::GlrlOutput { tol, .. } => format!("GLRL output within {tol:e}"),
            ExpectedProperty::SimultaneousCrossing { rel_tol } => {
                format!("singular values cross within {rel_tol} of each other")
            }
            ExpectedProperty::CriticalPointsClassified => "critical points classified".into(),
            ExpectedProperty::EscapeAlignment { min_alignment } => {
                format!("escape alignment >= {min_alignment}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub instance: InstanceSpec,
    pub train: TrainOverrides,
    pub oracles: Vec<OracleKind>,
    pub expected: Vec<ExpectedProperty>,
}

impl Scenario {
    pub fn train_config(&self, m: &IncompleteMatrix) -> TrainConfig {
        self.train.apply(TrainConfig::for_instance(m))
    }
}

fn fixed(src: &str) -> InstanceSpec {
    InstanceSpec::Fixed(
        IncompleteMatrix::parse_text(src, ParseOptions::default()).expect("built-in instance"),
    )
}

/// Rank-3 ground truth of the staircase scenario; entry (0, 3) is withheld.
pub fn staircase_ground_truth() -> DenseMatrix {
    let x = DenseMatrix::from_rows(&[
        [3.0, 1.0, 0.0],
        [1.0, 2.0, 1.0],
        [0.0, 1.0, 2.0],
        [2.0, 0.0, 1.0],
    ]);
    let y = DenseMatrix::from_rows(&[
        [2.0, 1.0, 0.0],
        [1.0, 0.0, 1.0],
        [1.0, 2.0, 1.0],
        [0.0, 1.0, 1.0],
    ]);
    x.mul_transpose(&y).expect("conformant")
}

fn staircase() -> InstanceSpec {
    let truth = staircase_ground_truth();
    let entries: Vec<(usize, usize, f64)> = (0..4)
        .flat_map(|i| (0..4).map(move |j| (i, j)))
        .filter(|&(i, j)| (i, j) != (0, 3))
        .map(|(i, j)| (i, j, truth[(i, j)]))
        .collect();
    InstanceSpec::Fixed(
        IncompleteMatrix::from_entries(4, &entries, ParseOptions::default())
            .expect("built-in instance"),
    )
}

fn common() -> Vec<ExpectedProperty> {
    vec![
        ExpectedProperty::CriticalPointsClassified,
        ExpectedProperty::EscapeAlignment {
            min_alignment: 0.99,
        },
    ]
}

fn with_common(mut props: Vec<ExpectedProperty>) -> Vec<ExpectedProperty> {
    props.extend(common());
    props
}

/// The built-in scenario suite.
pub fn registry() -> Vec<Scenario> {
    use ExpectedProperty as P;
    let m2_nuclear = 34f64.sqrt() + 5.0;
    vec![
        Scenario {
            name: "M1".into(),
            instance: fixed("1 2 *\n3 * *\n* * 5"),
            train: TrainOverrides {
                init_variance: Some(1e-8),
                ..Default::default()
            },
            oracles: vec![OracleKind::NuclearNorm, OracleKind::MinRank],
            expected: with_common(vec![
                P::Connectivity {
                    class: ConnectivityClass::Disconnected,
                },
                P::LearnedRankExceedsOracle,
                P::NuclearNormExceedsOracle { margin: 1e-2 },
            ]),
        },
        Scenario {
            name: "M2".into(),
            instance: fixed("1 2 *\n3 4 *\n* * 5"),
            train: TrainOverrides {
                init_variance: Some(1e-16),
                ..Default::default()
            },
            oracles: vec![OracleKind::NuclearNorm, OracleKind::MinRank],
            expected: with_common(vec![
                P::Connectivity {
                    class: ConnectivityClass::DisconnectedCompleteBipartite,
                },
                P::NuclearNormNear {
                    value: m2_nuclear,
                    tol: 1e-2,
                },
                P::LearnedRankExceedsOracle,
                P::ConvexMatchesBlocks { tol: 1e-4 },
            ]),
        },
        Scenario {
            name: "M3".into(),
            instance: fixed("1 2 *\n3 4 *\n6 * 5"),
            train: TrainOverrides {
                init_variance: Some(1e-16),
                plateau_grad_threshold: Some(1e-2),
                ..Default::default()
            },
            oracles: vec![
                OracleKind::NuclearNorm,
                OracleKind::MinRank,
                OracleKind::Glrl,
            ],
            expected: with_common(vec![
                P::Connectivity {
                    class: ConnectivityClass::Connected,
                },
                P::FinalRank { rank: 2 },
                P::LearnedRankEqualsOracle,
                P::PlateauRanks {
                    ranks: vec![0, 1, 2],
                },
                P::RankIncrementsByOne,
                P::HimtFraction {
                    min_fraction: 0.99,
                    angle_tol: 1e-2,
                },
            ]),
        },
        Scenario {
            name: "M4".into(),
            instance: fixed("1 2\n3 *"),
            train: TrainOverrides {
                init_variance: Some(1e-16),
                ..Default::default()
            },
            oracles: vec![OracleKind::MinRank],
            expected: with_common(vec![
                P::EntryNear {
                    row: 1,
                    col: 1,
                    value: 6.0,
                    tol: 5e-2,
                },
                P::LearnedRankEqualsOracle,
            ]),
        },
        Scenario {
            name: "fig4".into(),
            instance: fixed("1 * 3\n* 5 *\n3 * 9"),
            train: TrainOverrides {
                init_variance: Some(1e-8),
                ..Default::default()
            },
            oracles: vec![
                OracleKind::NuclearNorm,
                OracleKind::MinRank,
                OracleKind::Glrl,
            ],
            expected: with_common(vec![
                P::Connectivity {
                    class: ConnectivityClass::DisconnectedCompleteBipartite,
                },
                P::FirstPlateauEntries {
                    entries: vec![(0, 0, 1.0), (0, 2, 3.0), (2, 0, 3.0), (2, 2, 9.0)],
                    tol: 1e-2,
                },
                P::FinalRank { rank: 2 },
                P::SymmetricPairs {
                    pairs: vec![(0, 1), (1, 2)],
                    tol: 1e-2,
                },
                P::ConvexMatchesBlocks { tol: 1e-4 },
                P::GlrlOutput {
                    rows: vec![
                        vec![1.0, 0.0, 3.0],
                        vec![0.0, 5.0, 0.0],
                        vec![3.0, 0.0, 9.0],
                    ],
                    tol: 1e-6,
                },
            ]),
        },
        Scenario {
            name: "fig4_tiny_init".into(),
            instance: fixed("1 * 3\n* 5 *\n3 * 9"),
            train: TrainOverrides {
                init_variance: Some(1e-24),
                ..Default::default()
            },
            oracles: vec![],
            expected: with_common(vec![
                P::PlateauRanks {
                    ranks: vec![0, 1, 2],
                },
                P::FirstPlateauEntries {
                    entries: vec![(0, 0, 1.0), (0, 2, 3.0), (2, 0, 3.0), (2, 2, 9.0)],
                    tol: 1e-2,
                },
                P::FirstPlateauSubManifold {
                    component: 0,
                    tol: 1e-3,
                },
            ]),
        },
        Scenario {
            name: "coincident2x2".into(),
            instance: fixed("2 *\n* 2"),
            train: TrainOverrides {
                init_variance: Some(1e-64),
                ..Default::default()
            },
            oracles: vec![OracleKind::NuclearNorm],
            expected: with_common(vec![
                P::Connectivity {
                    class: ConnectivityClass::DisconnectedCompleteBipartite,
                },
                P::PlateauRanks { ranks: vec![0, 2] },
                P::SimultaneousCrossing { rel_tol: 0.05 },
                P::ConvexMatchesBlocks { tol: 1e-4 },
            ]),
        },
        Scenario {
            name: "staircase".into(),
            instance: staircase(),
            train: TrainOverrides {
                init_variance: Some(1e-16),
                plateau_grad_threshold: Some(1e-2),
                ..Default::default()
            },
            oracles: vec![OracleKind::MinRank],
            expected: with_common(vec![
                P::Connectivity {
                    class: ConnectivityClass::Connected,
                },
                P::FinalRank { rank: 3 },
                P::LearnedRankEqualsOracle,
                P::EntryNear {
                    row: 0,
                    col: 3,
                    value: 1.0,
                    tol: 1e-2,
                },
                P::PlateauRanks {
                    ranks: vec![0, 1, 2, 3],
                },
                P::RankIncrementsByOne,
                P::HimtFraction {
                    min_fraction: 0.99,
                    angle_tol: 1e-2,
                },
            ]),
        },
        Scenario {
            name: "diag".into(),
            instance: fixed("2 * *\n* -3 *\n* * 1.5"),
            train: TrainOverrides {
                init_variance: Some(1e-16),
                ..Default::default()
            },
            oracles: vec![OracleKind::NuclearNorm],
            expected: with_common(vec![
                P::Connectivity {
                    class: ConnectivityClass::DisconnectedCompleteBipartite,
                },
                P::NuclearNormNear {
                    value: 6.5,
                    tol: 1e-2,
                },
                P::ConvexMatchesBlocks { tol: 1e-4 },
            ]),
        },
    ]
}

pub fn scenario_by_name(name: &str) -> Option<Scenario> {
    registry().into_iter().find(|s| s.name == name)
}
