//! Distributed economic dispatch: every node generates so that total
//! generation meets total demand at least cost.
//!
//! The balance multiplier is `lambda = -sum(p_d + zeta/2xi) / sum(1/2xi)`.
//! Each node learns it by running two average consensuses, on
//! `u_i(0) = p_i^d + zeta_i / (2 xi_i)` and `v_i(0) = 1 / (2 xi_i)`, and
//! taking `-u_i* / v_i*`. It then generates `p_i^g = -(lambda + zeta_i) / (2 xi_i)`.

use nalgebra::DVector;

use crate::consensus::{run_diffusion, ratio_from_runs, ConsensusOptions, RatioOutcome};
use crate::cost::{EnergyNetwork, GenBounds};
use crate::{check_len, CoordError, ExecMode, RunStats};

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOptions {
    pub consensus: ConsensusOptions,
    /// Relative tolerance on `|sum p_g - sum p_d|`.
    pub balance_tol: f64,
    pub mode: ExecMode,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        GenerationOptions { consensus: ConsensusOptions::default(), balance_tol: 1e-6, mode: ExecMode::Matrix }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationResult {
    /// Network-wide balance multiplier (mean of the node estimates).
    pub lambda: f64,
    /// Each node's own estimate of the multiplier.
    pub lambda_per_node: Vec<f64>,
    pub p_g: Vec<f64>,
    pub u_stats: RunStats,
    pub v_stats: RunStats,
    pub trace: Vec<(f64, String, DVector<f64>)>,
}

impl GenerationResult {
    pub fn converged(&self) -> bool {
        self.u_stats.converged && self.v_stats.converged
    }
}

/// Balance multiplier computed with global knowledge.
pub fn closed_form_lambda(network: &EnergyNetwork, p_d: &[f64]) -> f64 {
    let num: f64 = network.gen.iter().zip(p_d).map(|(c, &d)| d + c.zeta / (2.0 * c.xi)).sum();
    let den: f64 = network.gen.iter().map(|c| 1.0 / (2.0 * c.xi)).sum();
    -num / den
}

pub(crate) fn balance_tolerance(tol: f64, p_d: &[f64]) -> f64 {
    tol * (1.0 + p_d.iter().sum::<f64>().abs())
}

pub(crate) fn ensure_valid(network: &EnergyNetwork) -> Result<(), CoordError> {
    let v = network.validate();
    if v.is_empty() {
        Ok(())
    } else {
        Err(CoordError::InvalidNetwork(v))
    }
}

/// Runs the distributed dispatch.
pub fn coordinate_generation(
    network: &EnergyNetwork,
    p_d: &[f64],
    opts: &GenerationOptions,
) -> Result<GenerationResult, CoordError> {
    ensure_valid(network)?;
    let n = network.node_count();
    check_len("p_d", p_d.len(), n)?;
    let u0: Vec<f64> = network.gen.iter().zip(p_d).map(|(c, &d)| d + c.zeta / (2.0 * c.xi)).collect();
    let v0: Vec<f64> = network.gen.iter().map(|c| 1.0 / (2.0 * c.xi)).collect();

    let diffusion = opts.mode.unit_diffusion(&network.graph);
    let copts = ConsensusOptions { stop: Default::default(), ..opts.consensus.clone() };
    let u = run_diffusion(diffusion.as_ref(), None, DVector::from_vec(u0), &copts)?;
    let v = run_diffusion(diffusion.as_ref(), None, DVector::from_vec(v0), &copts)?;
    let mut trace = Vec::new();
    if copts.trace_stride.is_some() {
        trace.extend(u.trace.iter().map(|(t, x)| (*t, "u".to_string(), x.clone())));
        trace.extend(v.trace.iter().map(|(t, x)| (*t, "v".to_string(), x.clone())));
    }
    let (u_stats, v_stats) = (RunStats::from(&u), RunStats::from(&v));
    for (stats, name) in [(&u_stats, "generation consensus (u)"), (&v_stats, "generation consensus (v)")] {
        if !stats.converged {
            return Err(CoordError::NotConverged { stage: name, residual: stats.residual, elapsed: stats.elapsed });
        }
    }
    let ratio: RatioOutcome = ratio_from_runs(u, v)?;
    let p_g: Vec<f64> = network
        .gen
        .iter()
        .zip(ratio.per_node.iter())
        .map(|(c, &lam)| -(lam + c.zeta) / (2.0 * c.xi))
        .collect();

    let imbalance = p_g.iter().sum::<f64>() - p_d.iter().sum::<f64>();
    let tolerance = balance_tolerance(opts.balance_tol, p_d);
    if imbalance.abs() > tolerance {
        return Err(CoordError::Unbalanced { imbalance, tolerance });
    }
    Ok(GenerationResult {
        lambda: ratio.value(),
        lambda_per_node: ratio.per_node.iter().copied().collect(),
        p_g,
        u_stats,
        v_stats,
        trace,
    })
}

/// Largest violation of `2 xi_i p_i + zeta_i + lambda = 0`.
pub fn stationarity_residual(network: &EnergyNetwork, p_g: &[f64], lambda: f64) -> f64 {
    network.gen.iter().zip(p_g).map(|(c, &p)| (2.0 * c.xi * p + c.zeta + lambda).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeBoundCheck {
    pub node: usize,
    pub p_g: f64,
    pub bounds: GenBounds,
    pub feasible: bool,
    /// Node-local recomputation of the optimal generation from the
    /// x/y/z consensus limits.
    pub probe: f64,
    pub probe_feasible: bool,
}

/// The uniform-`zeta` sufficient condition at one node:
/// `p^D / upper <= sum_j xi_i / xi_j <= p^D / lower`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureCondition {
    pub node: usize,
    pub ratio_sum: f64,
    pub min_ratio: Option<f64>,
    pub max_ratio: Option<f64>,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport {
    pub nodes: Vec<NodeBoundCheck>,
    /// Present only when every node has the same `zeta`.
    pub curvature_condition: Option<Vec<CurvatureCondition>>,
}

impl BoundsReport {
    pub fn all_feasible(&self) -> bool {
        self.nodes.iter().all(|c| c.feasible)
    }

    pub fn infeasible_nodes(&self) -> Vec<usize> {
        self.nodes.iter().filter(|c| !c.feasible).map(|c| c.node).collect()
    }
}

/// Checks a dispatch against per-node generation limits. Infeasibility is
/// reported, not corrected.
pub fn check_generation_bounds(
    network: &EnergyNetwork,
    result: &GenerationResult,
    bounds: &[GenBounds],
    p_d: &[f64],
    opts: &GenerationOptions,
) -> Result<BoundsReport, CoordError> {
    let n = network.node_count();
    check_len("bounds", bounds.len(), n)?;
    check_len("p_d", p_d.len(), n)?;
    check_len("p_g", result.p_g.len(), n)?;

    let diffusion = opts.mode.unit_diffusion(&network.graph);
    let copts = ConsensusOptions { stop: Default::default(), ..opts.consensus.clone() };
    let x = run_diffusion(diffusion.as_ref(), None, DVector::from_column_slice(p_d), &copts)?;
    let y0 = DVector::from_iterator(n, network.gen.iter().map(|c| 1.0 / (2.0 * c.xi)));
    let z0 = DVector::from_iterator(n, network.gen.iter().map(|c| c.zeta / (2.0 * c.xi)));
    let y = run_diffusion(diffusion.as_ref(), None, y0, &copts)?;
    let z = run_diffusion(diffusion.as_ref(), None, z0, &copts)?;

    let nodes = (0..n)
        .map(|i| {
            let c = network.gen[i];
            let probe = (x.state[i] / y.state[i] + z.state[i] / y.state[i] - c.zeta) / (2.0 * c.xi);
            NodeBoundCheck {
                node: i,
                p_g: result.p_g[i],
                bounds: bounds[i],
                feasible: bounds[i].contains(result.p_g[i]),
                probe,
                probe_feasible: bounds[i].contains(probe),
            }
        })
        .collect();

    let zeta0 = network.gen[0].zeta;
    let uniform_zeta = network.gen.iter().all(|c| c.zeta == zeta0);
    let curvature_condition = uniform_zeta.then(|| {
        let demand: f64 = p_d.iter().sum();
        (0..n)
            .map(|i| {
                let xi_i = network.gen[i].xi;
                let ratio_sum: f64 = network.gen.iter().map(|c| xi_i / c.xi).sum();
                let min_ratio = bounds[i].upper.filter(|u| *u > 0.0).map(|u| demand / u);
                let max_ratio = bounds[i].lower.filter(|l| *l > 0.0).map(|l| demand / l);
                let satisfied =
                    min_ratio.is_none_or(|m| ratio_sum >= m) && max_ratio.is_none_or(|m| ratio_sum <= m);
                CurvatureCondition { node: i, ratio_sum, min_ratio, max_ratio, satisfied }
            })
            .collect()
    });
    Ok(BoundsReport { nodes, curvature_condition })
}
