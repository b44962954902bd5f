//! Incomplete matrices, their observation graphs and sampling-pattern classes.

mod graph;
mod matrix;
mod patterns;

pub use graph::{
    build_observation_graph, classify_connectivity, connected_components, entry_graph_connected,
    Component, ComponentDecomposition, ConnectivityClass, DisjointSets, ObservationGraph,
};
pub use matrix::{IncompleteMatrix, ParseOptions};
pub use patterns::{canonical_pattern, enumerate_pattern_classes, orbit, MAX_ENUMERATION_DIM};

use thiserror::Error;

use crate::linalg::LinalgError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObservationError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid JSON matrix: {0}")]
    Json(String),
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("observed entry ({row}, {col}) is zero; observed values must be nonzero")]
    ZeroObservation { row: usize, col: usize },
    #[error("observed entry ({row}, {col}) is not finite")]
    NonFiniteObservation { row: usize, col: usize },
    #[error("entry ({row}, {col}) is out of range for d = {d}")]
    OutOfRange { row: usize, col: usize, d: usize },
    #[error("entry ({row}, {col}) is listed more than once")]
    Duplicate { row: usize, col: usize },
    #[error("the matrix has no observed entries")]
    NoObservations,
    #[error("pattern enumeration is limited to d <= {max}; got d = {d}")]
    DimensionTooLarge { d: usize, max: usize },
    #[error("sample size {n} is outside 1..={max}")]
    InvalidSampleSize { n: usize, max: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}
