//! Distributed coordination of energy generation and energy flow on a
//! network of nodes.
//!
//! Each node knows only its own quadratic generation cost and the quadratic
//! cost of the lines it touches. The coordination laws here reach the
//! network-wide optimum by running consensus-type dynamics that exchange
//! values only between neighbors:
//!
//! * [`generation`]: economic dispatch meeting total demand,
//! * [`flow`]: least-cost flows that deliver each node's desired level,
//! * [`joint`]: generation and flow optimized together,
//!
//! and every result can be certified against the centralized solvers in
//! [`oracle`]. The [`scenario`], [`report`] and [`run`] modules form the
//! file-driven harness used by the command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod batch;
pub mod consensus;
pub mod cost;
mod error;
pub mod flow;
pub mod generation;
pub mod graph;
pub mod joint;
pub mod oracle;
pub mod report;
pub mod run;
pub mod scenario;

pub use error::CoordError;

use serde::{Deserialize, Serialize};

use crate::agents::SyncNetwork;
use crate::consensus::{ConsensusRun, DenseDiffusion, Diffusion};
use crate::graph::{laplacian_from_aligned, Graph};

/// How the per-node dynamics are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    /// Dense matrix-vector products.
    #[default]
    Matrix,
    /// One agent per node exchanging values with neighbors each round.
    Message,
}

impl ExecMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ExecMode::Matrix => "matrix",
            ExecMode::Message => "message",
        }
    }

    /// Diffusion operator for the Laplacian of `g` with per-edge `weights`.
    pub fn diffusion(self, g: &Graph, weights: &[f64]) -> Box<dyn Diffusion> {
        match self {
            ExecMode::Matrix => Box::new(DenseDiffusion::new(laplacian_from_aligned(g, weights))),
            ExecMode::Message => Box::new(SyncNetwork::new(g, weights)),
        }
    }

    pub fn unit_diffusion(self, g: &Graph) -> Box<dyn Diffusion> {
        self.diffusion(g, &vec![1.0; g.edge_count()])
    }
}

impl std::str::FromStr for ExecMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "matrix" => Ok(ExecMode::Matrix),
            "message" => Ok(ExecMode::Message),
            other => Err(format!("unknown mode `{other}` (expected matrix or message)")),
        }
    }
}

/// Summary of one integration, without the state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub converged: bool,
    pub elapsed: f64,
    pub residual: f64,
    pub steps: usize,
}

impl From<&ConsensusRun> for RunStats {
    fn from(r: &ConsensusRun) -> Self {
        RunStats { converged: r.converged, elapsed: r.elapsed, residual: r.residual, steps: r.steps }
    }
}

pub(crate) fn check_len(what: &str, got: usize, n: usize) -> Result<(), CoordError> {
    if got == n {
        Ok(())
    } else {
        Err(CoordError::Dimension(format!("{what} has {got} entries, network has {n} nodes")))
    }
}
