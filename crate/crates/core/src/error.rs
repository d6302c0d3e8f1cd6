use thiserror::Error;

use crate::consensus::ConsensusError;
use crate::cost::{FlowMapError, Violation};
use crate::graph::GraphError;

/// Failure of a coordination law or reference solver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoordError {
    #[error("invalid network: {}", join(.0))]
    InvalidNetwork(Vec<Violation>),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("generation and demand are unbalanced: sum p_g - sum p_d = {imbalance:e} exceeds tolerance {tolerance:e}")]
    Unbalanced { imbalance: f64, tolerance: f64 },
    #[error("{stage} did not converge: residual {residual:e} at t = {elapsed}")]
    NotConverged { stage: &'static str, residual: f64, elapsed: f64 },
    #[error("singular system: {0}")]
    Singular(String),
    #[error("invalid options: {0}")]
    Options(String),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    FlowMap(#[from] FlowMapError),
}

impl CoordError {
    /// True for errors caused by the inputs rather than by the numerics.
    pub fn is_precondition(&self) -> bool {
        match self {
            CoordError::InvalidNetwork(_)
            | CoordError::Dimension(_)
            | CoordError::Unbalanced { .. }
            | CoordError::Options(_)
            | CoordError::Graph(_)
            | CoordError::FlowMap(_) => true,
            CoordError::Consensus(e) => matches!(
                e,
                ConsensusError::Disconnected | ConsensusError::Dimension(_) | ConsensusError::Options(_)
            ),
            CoordError::NotConverged { .. } | CoordError::Singular(_) => false,
        }
    }
}

pub(crate) fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}
