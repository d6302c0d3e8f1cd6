//! Distributed least-cost energy flow for a given generation profile.
//!
//! The vertex multipliers solve `L lambda_v = w` where `L` is the Laplacian
//! with edge weights `1/(4 alpha_ij)` and
//! `w_i = -sum_j beta_ij/(2 alpha_ij) + p_i^g - p_i^d`. Nodes reach the
//! solution by integrating `lambda_v' = -L lambda_v + w` from zero. Edge
//! multipliers and flows then follow locally.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::consensus::{run_diffusion, ConsensusOptions, StopRule};
use crate::cost::{EnergyNetwork, FlowMap};
use crate::generation::{balance_tolerance, ensure_valid};
use crate::{check_len, CoordError, ExecMode, RunStats};

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOptions {
    /// With [`StopRule::Horizon`] the multipliers are integrated for exactly
    /// `t_max` and returned whether or not they have settled.
    pub consensus: ConsensusOptions,
    pub balance_tol: f64,
    pub mode: ExecMode,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions { consensus: ConsensusOptions::default(), balance_tol: 1e-6, mode: ExecMode::Matrix }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub lambda_v: Vec<f64>,
    /// One per canonical edge.
    pub lambda_e: Vec<f64>,
    pub flows: FlowMap,
    pub w: Vec<f64>,
    pub stats: RunStats,
    pub trace: Vec<(f64, DVector<f64>)>,
}

/// `w_i = -sum_{j in N_i} beta_ij / (2 alpha_ij) + (p_i^g - p_i^d)`.
pub fn flow_forcing(network: &EnergyNetwork, p_g: &[f64], p_d: &[f64]) -> Vec<f64> {
    network
        .beta_pressure()
        .iter()
        .zip(p_g.iter().zip(p_d))
        .map(|(b, (g, d))| -b + (g - d))
        .collect()
}

pub(crate) fn check_balance(p_g: &[f64], p_d: &[f64], tol: f64) -> Result<(), CoordError> {
    let imbalance = p_g.iter().sum::<f64>() - p_d.iter().sum::<f64>();
    let tolerance = balance_tolerance(tol, p_d);
    if imbalance.abs() > tolerance {
        Err(CoordError::Unbalanced { imbalance, tolerance })
    } else {
        Ok(())
    }
}

/// Runs the distributed flow law.
pub fn coordinate_flow(
    network: &EnergyNetwork,
    p_g: &[f64],
    p_d: &[f64],
    opts: &FlowOptions,
) -> Result<FlowResult, CoordError> {
    ensure_valid(network)?;
    let n = network.node_count();
    check_len("p_g", p_g.len(), n)?;
    check_len("p_d", p_d.len(), n)?;
    check_balance(p_g, p_d, opts.balance_tol)?;

    let mut w = flow_forcing(network, p_g, p_d);
    // an accepted imbalance is spread evenly so the dynamics can settle
    let mean = w.iter().sum::<f64>() / n as f64;
    w.iter_mut().for_each(|x| *x -= mean);
    let diffusion = opts.mode.diffusion(&network.graph, &network.flow_weights());
    let forcing = DVector::from_column_slice(&w);
    let run = run_diffusion(diffusion.as_ref(), Some(&forcing), DVector::zeros(n), &opts.consensus)?;
    let stats = RunStats::from(&run);
    if !run.converged && opts.consensus.stop == StopRule::Converge {
        return Err(CoordError::NotConverged { stage: "flow multipliers", residual: run.residual, elapsed: run.elapsed });
    }
    let lambda_v: Vec<f64> = run.state.iter().copied().collect();
    Ok(FlowResult {
        lambda_e: network.edge_multipliers(&lambda_v),
        flows: network.flows_from_multipliers(&lambda_v),
        lambda_v,
        w,
        stats,
        trace: run.trace,
    })
}

/// Largest violations of the flow optimality conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowKkt {
    /// `2 alpha_ij p_ij + beta_ij + lambda_i + lambda_e = 0`, both orientations.
    pub stationarity: f64,
    /// `sum_j p_ij + p_i^g - p_i^d = 0`.
    pub node_balance: f64,
    /// `p_ij + p_ji = 0`.
    pub antisymmetry: f64,
}

impl FlowKkt {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.node_balance).max(self.antisymmetry)
    }
}

pub fn kkt_residuals(
    network: &EnergyNetwork,
    lambda_v: &[f64],
    lambda_e: &[f64],
    flows: &FlowMap,
    p_g: &[f64],
    p_d: &[f64],
) -> FlowKkt {
    let g = &network.graph;
    let mut stationarity: f64 = 0.0;
    let mut antisymmetry: f64 = 0.0;
    for (k, e) in g.edges().iter().enumerate() {
        let c = network.flow[k];
        for (from, to) in [(e.lo, e.hi), (e.hi, e.lo)] {
            let oc = c.oriented(*e, from);
            let p = flows.get(g, from, to).unwrap_or(f64::NAN);
            stationarity = stationarity.max((2.0 * oc.alpha * p + oc.beta + lambda_v[from] + lambda_e[k]).abs());
        }
        let fwd = flows.get(g, e.lo, e.hi).unwrap_or(f64::NAN);
        let back = flows.get(g, e.hi, e.lo).unwrap_or(f64::NAN);
        antisymmetry = antisymmetry.max((fwd + back).abs());
    }
    FlowKkt { stationarity, node_balance: delivered_residual(network, flows, p_g, p_d), antisymmetry }
}

/// `max_i |p_i^g + sum_j p_ij - p_i^d|`.
pub fn delivered_residual(network: &EnergyNetwork, flows: &FlowMap, p_g: &[f64], p_d: &[f64]) -> f64 {
    flows
        .net_inflow(&network.graph)
        .iter()
        .zip(p_g.iter().zip(p_d))
        .map(|(inflow, (g, d))| (inflow + g - d).abs())
        .fold(0.0, f64::max)
}
