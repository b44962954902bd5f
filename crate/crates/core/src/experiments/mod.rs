//! Scenario registry, experiment protocols and artifact emission.

mod census;
mod fig1;
mod random;
mod runner;
mod scenario;
mod svg;
mod sweep;

pub use census::{census, CensusClass, CensusReport, CensusRow, CensusRun, CENSUS_INIT_VARIANCE};
pub use fig1::{
    reproduce_fig1, Fig1Cell, Fig1Config, Fig1Report, Fig1Summary, CBD_COHORT, CBD_RATE_TARGET,
    CONNECTED_RATE_TARGET, RANDOM_COHORT,
};
pub use random::{generate_random_instance, sample_instance_with_class};
pub use runner::{
    run_scenario, AuditEntry, PlateauSummary, PropertyOutcome, RunReport, TransitionCheck,
};
pub use scenario::{
    registry, scenario_by_name, staircase_ground_truth, ExpectedProperty, InstanceSpec, OracleKind,
    Scenario, TrainOverrides,
};
pub use svg::{line_chart, Series};
pub use sweep::{extrapolated_rank, init_scale_sweep, SweepReport, SweepRow, SHRINK_FACTOR};

use thiserror::Error;

use crate::dynamics::DynamicsError;
use crate::landscape::LandscapeError;
use crate::linalg::LinalgError;
use crate::observation::ObservationError;
use crate::oracles::OracleError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error(transparent)]
    Observation(#[from] ObservationError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Landscape(#[from] LandscapeError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Derives an independent seed for one cell of an experiment grid.
pub fn cell_seed(base: u64, parts: &[u64]) -> u64 {
    // SplitMix64 finalizer over the folded parts.
    let mut z = base;
    for &p in parts {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}
