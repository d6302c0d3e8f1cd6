//! Joint optimization of generation and flow.
//!
//! Eliminating generation from the joint optimality conditions leaves
//! `(L + L_k) lambda_v = w_J`, where `L_k` is a complete-graph Laplacian
//! built from the generation curvatures. Two distributed schemes are
//! provided:
//!
//! * [`coordinate_joint_recursive`] alternates a flow solve with a
//!   generation update until generation stops moving. Nothing guarantees
//!   this converges and on many networks it does not; the outcome is
//!   reported either way.
//! * [`coordinate_joint_twoscale`] integrates
//!   `lambda_v' = -(L + L_k) lambda_v + w_J` directly. The non-local
//!   `L_k` term is supplied at every outer evaluation by an inner ratio
//!   consensus that runs to its own (tighter) tolerance.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::consensus::{run_diffusion, solve, ConsensusError, ConsensusOptions, Diffusion, Rhs, StopRule};
use crate::cost::{EnergyNetwork, FlowMap};
use crate::flow::{coordinate_flow, flow_forcing, kkt_residuals, FlowOptions};
use crate::generation::{balance_tolerance, coordinate_generation, ensure_valid, GenerationOptions};
use crate::{check_len, CoordError, ExecMode, RunStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JointAlgorithm {
    Recursive,
    TwoScale,
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JointStatus {
    Converged,
    /// Fixed-horizon run ended (the residual is still reported).
    Horizon,
    MaxIterations,
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointResult {
    pub algorithm: JointAlgorithm,
    pub lambda: f64,
    pub lambda_v: Vec<f64>,
    pub lambda_e: Vec<f64>,
    pub p_g: Vec<f64>,
    pub flows: FlowMap,
    pub status: JointStatus,
    /// Outer iterations (recursive) or outer steps (two-scale).
    pub iterations: usize,
    pub residual: f64,
    pub elapsed: f64,
    /// Generation iterates of the recursive scheme, starting from the
    /// decoupled dispatch.
    pub history: Vec<Vec<f64>>,
    pub inner_runs: usize,
    pub trace: Vec<(f64, DVector<f64>)>,
}

impl JointResult {
    pub fn converged(&self) -> bool {
        self.status == JointStatus::Converged
    }
}

/// `w_J` of the joint multiplier system.
pub fn joint_forcing(network: &EnergyNetwork, p_d: &[f64]) -> Vec<f64> {
    let inv_sum: f64 = network.gen.iter().map(|c| 1.0 / c.xi).sum();
    let shared: f64 = network.gen.iter().zip(p_d).map(|(c, &d)| c.zeta / (2.0 * c.xi) + d).sum();
    network
        .beta_pressure()
        .iter()
        .zip(network.gen.iter().zip(p_d))
        .map(|(b, (c, &d))| -b - c.zeta / (2.0 * c.xi) - d + shared / (c.xi * inv_sum))
        .collect()
}

/// Generation that satisfies `2 xi_i p_i + zeta_i + lambda_i + lambda_v_i = 0`.
pub fn generation_from_multipliers(network: &EnergyNetwork, lambda: &[f64], lambda_v: &[f64]) -> Vec<f64> {
    network
        .gen
        .iter()
        .zip(lambda.iter().zip(lambda_v))
        .map(|(c, (l, lv))| -(c.zeta + l + lv) / (2.0 * c.xi))
        .collect()
}

/// Distributed evaluation of the balance multiplier for given vertex
/// multipliers: ratio consensus over `r(0) = 1/(2 xi)` and
/// `s(0) = zeta/(2 xi) + lambda_v/(2 xi) + p_d`. Returns per-node values.
fn balance_multiplier(
    network: &EnergyNetwork,
    diffusion: &dyn Diffusion,
    lambda_v: &[f64],
    p_d: &[f64],
    opts: &ConsensusOptions,
) -> Result<Vec<f64>, CoordError> {
    let r0: Vec<f64> = network.gen.iter().map(|c| 1.0 / (2.0 * c.xi)).collect();
    let s0: Vec<f64> = network
        .gen
        .iter()
        .zip(lambda_v.iter().zip(p_d))
        .map(|(c, (lv, d))| c.zeta / (2.0 * c.xi) + lv / (2.0 * c.xi) + d)
        .collect();
    // the attainable residual grows with the magnitude of the inputs
    let magnitude = s0.iter().chain(&r0).fold(0.0f64, |m, x| m.max(x.abs()));
    let opts = ConsensusOptions { tol: opts.tol * (1.0 + magnitude), ..opts.clone() };
    let ratio = crate::consensus::ratio_consensus_with(diffusion, &s0, &r0, &opts)?;
    if !ratio.converged() {
        return Err(CoordError::NotConverged {
            stage: "balance multiplier consensus",
            residual: ratio.numerator.residual.max(ratio.denominator.residual),
            elapsed: ratio.numerator.elapsed,
        });
    }
    Ok(ratio.per_node.iter().copied().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecursiveOptions {
    /// Per-node stop thresholds on `|p_i^g(k) - p_i^g(k-1)|`; a single
    /// entry applies to every node.
    pub eps: Vec<f64>,
    pub max_iter: usize,
    pub generation: GenerationOptions,
    /// Options of every inner flow solve (always run to convergence).
    pub flow: FlowOptions,
}

impl Default for RecursiveOptions {
    fn default() -> Self {
        RecursiveOptions {
            eps: vec![1e-6],
            max_iter: 100,
            generation: GenerationOptions::default(),
            flow: FlowOptions::default(),
        }
    }
}

impl RecursiveOptions {
    pub fn with_mode(mut self, mode: ExecMode) -> Self {
        self.generation.mode = mode;
        self.flow.mode = mode;
        self
    }
}

/// Iterates stop once the generation vector has grown this many times
/// beyond the demand scale.
const DIVERGENCE_FACTOR: f64 = 1e4;

/// Flow-stage options with the tolerance scaled to the forcing, so that
/// growing iterates do not push the target below roundoff.
fn scaled(opts: &FlowOptions, network: &EnergyNetwork, p_g: &[f64], p_d: &[f64]) -> FlowOptions {
    let w = flow_forcing(network, p_g, p_d);
    let magnitude = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut out = opts.clone();
    out.consensus.tol *= 1.0 + magnitude;
    // balance is imposed by the multiplier step; the forcing is centred
    out.balance_tol = f64::INFINITY;
    out
}

/// Alternating flow / generation updates, started from the decoupled
/// dispatch.
pub fn coordinate_joint_recursive(
    network: &EnergyNetwork,
    p_d: &[f64],
    opts: &RecursiveOptions,
) -> Result<JointResult, CoordError> {
    ensure_valid(network)?;
    let n = network.node_count();
    check_len("p_d", p_d.len(), n)?;
    if opts.max_iter == 0 {
        return Err(CoordError::Options("max_iter must be at least 1".into()));
    }
    let eps: Vec<f64> = match opts.eps.len() {
        1 => vec![opts.eps[0]; n],
        len if len == n => opts.eps.clone(),
        len => return Err(CoordError::Dimension(format!("eps has {len} entries, network has {n} nodes"))),
    };
    let mut flow_opts = opts.flow.clone();
    flow_opts.consensus.stop = StopRule::Converge;
    let unit = opts.generation.mode.unit_diffusion(&network.graph);
    let scale = 1.0 + p_d.iter().map(|d| d.abs()).fold(0.0, f64::max);

    let mut p_g = coordinate_generation(network, p_d, &opts.generation)?.p_g;
    let mut history = vec![p_g.clone()];
    let mut lambda = vec![0.0; n];
    let mut status = JointStatus::MaxIterations;
    let mut iterations = 0;
    let mut last_change = f64::INFINITY;
    let mut stage = None;
    while iterations < opts.max_iter {
        let current = coordinate_flow(network, &p_g, p_d, &scaled(&flow_opts, network, &p_g, p_d))?;
        lambda = balance_multiplier(network, unit.as_ref(), &current.lambda_v, p_d, &opts.generation.consensus)?;
        let next = generation_from_multipliers(network, &lambda, &current.lambda_v);
        stage = Some(current);
        iterations += 1;
        let blown = next.iter().any(|p| !p.is_finite() || p.abs() > DIVERGENCE_FACTOR * scale);
        if blown {
            // keep the last finite iterate so the report stays well defined
            status = JointStatus::Diverged;
            break;
        }
        last_change = next.iter().zip(&p_g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let settled = next.iter().zip(&p_g).zip(&eps).all(|((a, b), e)| (a - b).abs() <= *e);
        history.push(next.clone());
        p_g = next;
        if settled {
            status = JointStatus::Converged;
            break;
        }
    }

    let last = match status {
        JointStatus::Diverged => stage.expect("at least one iteration ran"),
        _ => coordinate_flow(network, &p_g, p_d, &scaled(&flow_opts, network, &p_g, p_d))?,
    };
    let (lambda_v, flows) = (last.lambda_v, last.flows);
    Ok(JointResult {
        algorithm: JointAlgorithm::Recursive,
        lambda: lambda.iter().sum::<f64>() / n as f64,
        lambda_e: network.edge_multipliers(&lambda_v),
        lambda_v,
        p_g,
        flows,
        status,
        iterations,
        residual: last_change,
        elapsed: 0.0,
        history,
        inner_runs: iterations,
        trace: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoScaleOptions {
    /// Outer (slow-clock) integration of the vertex multipliers; `tol` is
    /// the outer tolerance and `dt` the outer step.
    pub outer: ConsensusOptions,
    /// Inner (fast-clock) consensus run at every outer evaluation; its
    /// `max_steps` emulates a finite ratio between the two clocks.
    pub inner: ConsensusOptions,
    pub balance_tol: f64,
    pub mode: ExecMode,
}

impl Default for TwoScaleOptions {
    fn default() -> Self {
        TwoScaleOptions {
            outer: ConsensusOptions::default(),
            inner: ConsensusOptions { tol: 1e-12, ..Default::default() },
            balance_tol: 1e-6,
            mode: ExecMode::Matrix,
        }
    }
}

impl TwoScaleOptions {
    pub fn validate(&self) -> Result<(), CoordError> {
        if !(self.inner.tol < self.outer.tol) {
            return Err(CoordError::Options(format!(
                "inner tolerance {:e} must be tighter than outer tolerance {:e}",
                self.inner.tol, self.outer.tol
            )));
        }
        Ok(())
    }
}

/// Outer right-hand side:
/// `-L lambda_v - beta_i - zeta_i/(2 xi_i) + phi_i - lambda_v_i/(2 xi_i) - p_i^d`
/// with `phi_i` from an inner consensus.
struct TwoScaleRhs<'a> {
    outer: &'a dyn Diffusion,
    inner: &'a dyn Diffusion,
    inner_opts: &'a ConsensusOptions,
    /// `-beta_i - zeta_i/(2 xi_i) - p_i^d`
    constant: DVector<f64>,
    inv_2xi: DVector<f64>,
    /// `zeta_i/(2 xi_i) + p_i^d`
    s_offset: DVector<f64>,
    /// `xi_i r_i*` where `r*` is the consensus limit of `1/xi`.
    phi_scale: DVector<f64>,
    runs: usize,
}

impl Rhs for TwoScaleRhs<'_> {
    fn dim(&self) -> usize {
        self.constant.len()
    }

    fn eval(&mut self, x: &DVector<f64>, out: &mut DVector<f64>) -> Result<(), ConsensusError> {
        let s0 = x.component_mul(&self.inv_2xi) + &self.s_offset;
        let s = run_diffusion(self.inner, None, s0, self.inner_opts)?;
        self.runs += 1;
        if !s.converged && self.inner_opts.max_steps.is_none() {
            return Err(ConsensusError::Options(format!(
                "inner consensus stalled at residual {:e} (t = {})",
                s.residual, s.elapsed
            )));
        }
        self.outer.apply(x, out);
        *out += &self.constant;
        *out += s.state.component_div(&self.phi_scale);
        *out -= x.component_mul(&self.inv_2xi);
        Ok(())
    }
}

/// Two-timescale joint coordination.
pub fn coordinate_joint_twoscale(
    network: &EnergyNetwork,
    p_d: &[f64],
    opts: &TwoScaleOptions,
) -> Result<JointResult, CoordError> {
    ensure_valid(network)?;
    opts.validate()?;
    let n = network.node_count();
    check_len("p_d", p_d.len(), n)?;

    let outer = opts.mode.diffusion(&network.graph, &network.flow_weights());
    let inner = opts.mode.unit_diffusion(&network.graph);
    let inner_opts = ConsensusOptions { stop: StopRule::Converge, trace_stride: None, ..opts.inner.clone() };

    // r_i(0) = 1/xi_i does not depend on the outer state, so its limit is
    // shared by every outer instant.
    let r0 = DVector::from_iterator(n, network.gen.iter().map(|c| 1.0 / c.xi));
    let r = run_diffusion(inner.as_ref(), None, r0, &inner_opts)?;
    if !r.converged && inner_opts.max_steps.is_none() {
        return Err(CoordError::NotConverged { stage: "inner consensus", residual: r.residual, elapsed: r.elapsed });
    }
    let beta = network.beta_pressure();
    let mut rhs = TwoScaleRhs {
        outer: outer.as_ref(),
        inner: inner.as_ref(),
        inner_opts: &inner_opts,
        constant: DVector::from_iterator(
            n,
            (0..n).map(|i| -beta[i] - network.gen[i].zeta / (2.0 * network.gen[i].xi) - p_d[i]),
        ),
        inv_2xi: DVector::from_iterator(n, network.gen.iter().map(|c| 1.0 / (2.0 * c.xi))),
        s_offset: DVector::from_iterator(n, (0..n).map(|i| network.gen[i].zeta / (2.0 * network.gen[i].xi) + p_d[i])),
        phi_scale: DVector::from_iterator(n, (0..n).map(|i| network.gen[i].xi * r.state[i])),
        runs: 1,
    };
    // ||L_k||_inf <= max_i 1/xi_i, a bound every node can agree on locally
    let coupling_bound = network.gen.iter().map(|c| 1.0 / c.xi).fold(0.0, f64::max);
    let dt = opts.outer.resolve_dt(outer.norm_bound() + coupling_bound);
    let run = solve(&mut rhs, DVector::zeros(n), dt, &opts.outer)?;
    let inner_runs = rhs.runs;
    let status = if run.converged {
        JointStatus::Converged
    } else if opts.outer.stop == StopRule::Horizon {
        JointStatus::Horizon
    } else {
        return Err(CoordError::NotConverged { stage: "joint multipliers", residual: run.residual, elapsed: run.elapsed });
    };

    let lambda_v: Vec<f64> = run.state.iter().copied().collect();
    let lambda = balance_multiplier(network, inner.as_ref(), &lambda_v, p_d, &inner_opts)?;
    let p_g = generation_from_multipliers(network, &lambda, &lambda_v);
    let imbalance = p_g.iter().sum::<f64>() - p_d.iter().sum::<f64>();
    let tolerance = balance_tolerance(opts.balance_tol, p_d);
    if imbalance.abs() > tolerance {
        return Err(CoordError::Unbalanced { imbalance, tolerance });
    }
    let stats = RunStats::from(&run);
    Ok(JointResult {
        algorithm: JointAlgorithm::TwoScale,
        lambda: lambda.iter().sum::<f64>() / n as f64,
        lambda_e: network.edge_multipliers(&lambda_v),
        flows: network.flows_from_multipliers(&lambda_v),
        lambda_v,
        p_g,
        status,
        iterations: stats.steps,
        residual: stats.residual,
        elapsed: stats.elapsed,
        history: Vec::new(),
        inner_runs: inner_runs + 2,
        trace: run.trace,
    })
}

/// Largest violations of the joint optimality conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointKkt {
    pub global_balance: f64,
    pub flow_stationarity: f64,
    pub node_balance: f64,
    pub antisymmetry: f64,
    /// `2 xi_i p_i^g + zeta_i + lambda + lambda_v_i = 0`.
    pub generation_stationarity: f64,
}

impl JointKkt {
    pub fn max(&self) -> f64 {
        [self.global_balance, self.flow_stationarity, self.node_balance, self.antisymmetry, self.generation_stationarity]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

pub fn joint_kkt_residuals(network: &EnergyNetwork, result: &JointResult, p_d: &[f64]) -> JointKkt {
    let flow = kkt_residuals(network, &result.lambda_v, &result.lambda_e, &result.flows, &result.p_g, p_d);
    let generation_stationarity = network
        .gen
        .iter()
        .zip(result.p_g.iter().zip(&result.lambda_v))
        .map(|(c, (p, lv))| (2.0 * c.xi * p + c.zeta + result.lambda + lv).abs())
        .fold(0.0, f64::max);
    JointKkt {
        global_balance: (result.p_g.iter().sum::<f64>() - p_d.iter().sum::<f64>()).abs(),
        flow_stationarity: flow.stationarity,
        node_balance: flow.node_balance,
        antisymmetry: flow.antisymmetry,
        generation_stationarity,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{FlowCoeffs, GenCoeffs};
    use crate::graph::{complete_graph_laplacian, Graph};
    use crate::scenario::paper_sec4;
    use approx::assert_abs_diff_eq;

    fn two_node() -> (EnergyNetwork, Vec<f64>) {
        let net = EnergyNetwork::new(
            Graph::path(2),
            vec![GenCoeffs::new(1.0, 0.0, 0.0); 2],
            vec![FlowCoeffs::new(1.0, 0.0, 0.0)],
        );
        (net, vec![0.0, 2.0])
    }

    #[test]
    fn forcing_sums_to_zero() {
        let (net, p_d) = paper_sec4().network_and_demand().unwrap();
        let w = joint_forcing(&net, &p_d);
        let scale: f64 = w.iter().map(|x| x.abs()).sum();
        assert!(w.iter().sum::<f64>().abs() <= 1e-9 * scale);
    }

    #[test]
    fn twoscale_two_node_hand_solution() {
        // minimise p1^2 + p2^2 + 2 p12^2 subject to p1 + p12 = 0, p2 - p12 = 2
        let (net, p_d) = two_node();
        let r = coordinate_joint_twoscale(&net, &p_d, &Default::default()).unwrap();
        assert!(r.converged());
        assert_abs_diff_eq!(r.p_g[0], 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(r.p_g[1], 1.5, epsilon = 1e-6);
        assert_abs_diff_eq!(r.flows.canonical()[0], -0.5, epsilon = 1e-6);
        assert!(joint_kkt_residuals(&net, &r, &p_d).max() <= 1e-6);
    }

    #[test]
    fn twoscale_sec4_matches_reported() {
        let (net, p_d) = paper_sec4().network_and_demand().unwrap();
        let r = coordinate_joint_twoscale(&net, &p_d, &Default::default()).unwrap();
        let expected = [9.9318, 12.2600, 18.6629, 25.6667, 6.1108, 19.3678];
        for (p, e) in r.p_g.iter().zip(expected) {
            assert!((p - e).abs() <= 5e-3, "{p} vs {e}");
        }
        let k = |a: usize, b: usize| r.flows.get(&net.graph, a - 1, b - 1).unwrap();
        assert!((k(1, 2) + 3.4592).abs() <= 5e-3);
        assert!((k(4, 6) + 0.6328).abs() <= 5e-3);
    }

    #[test]
    fn twoscale_fixed_point_solves_joint_system() {
        let (net, p_d) = paper_sec4().network_and_demand().unwrap();
        let opts = TwoScaleOptions { outer: ConsensusOptions::default().with_tol(1e-10), ..Default::default() };
        let r = coordinate_joint_twoscale(&net, &p_d, &opts).unwrap();
        let m = net.flow_laplacian() + complete_graph_laplacian(&net.xi()).unwrap();
        let lv = DVector::from_column_slice(&r.lambda_v);
        let w = DVector::from_column_slice(&joint_forcing(&net, &p_d));
        assert!((m * lv - w).amax() <= 1e-8);
        assert!(joint_kkt_residuals(&net, &r, &p_d).max() <= 1e-6);
    }

    #[test]
    fn symmetric_network_has_no_flow() {
        let g = Graph::complete(4);
        let net = EnergyNetwork::new(g, vec![GenCoeffs::new(2.0, 1.0, 0.0); 4], vec![FlowCoeffs::new(1.5, 0.0, 0.0); 6]);
        let p_d = vec![3.0; 4];
        let r = coordinate_joint_twoscale(&net, &p_d, &Default::default()).unwrap();
        for p in &r.p_g {
            assert_abs_diff_eq!(*p, 3.0, epsilon = 1e-9);
        }
        assert!(r.flows.canonical().iter().all(|f| f.abs() < 1e-9));
    }

    #[test]
    fn inner_tolerance_must_be_tighter() {
        let (net, p_d) = two_node();
        let opts = TwoScaleOptions { inner: ConsensusOptions::default().with_tol(1e-9), ..Default::default() };
        assert!(matches!(coordinate_joint_twoscale(&net, &p_d, &opts), Err(CoordError::Options(_))));
    }

    #[test]
    fn halving_inner_tolerance_barely_moves_the_result() {
        let (net, p_d) = paper_sec4().network_and_demand().unwrap();
        let base = TwoScaleOptions::default();
        let a = coordinate_joint_twoscale(&net, &p_d, &base).unwrap();
        let mut finer = base.clone();
        finer.inner.tol /= 2.0;
        let b = coordinate_joint_twoscale(&net, &p_d, &finer).unwrap();
        let diff = a.p_g.iter().zip(&b.p_g).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(diff < base.outer.tol, "{diff}");
    }

    #[test]
    fn single_node_recursive() {
        let net = EnergyNetwork::new(Graph::new(1, &[]).unwrap(), vec![GenCoeffs::new(2.0, 1.0, 0.0)], vec![]);
        let r = coordinate_joint_recursive(&net, &[4.0], &Default::default()).unwrap();
        assert!(r.converged());
        assert_eq!(r.iterations, 1);
        assert_abs_diff_eq!(r.p_g[0], 4.0, epsilon = 1e-9);
        assert!(r.flows.canonical().is_empty());
    }

    #[test]
    fn two_node_recursion_oscillates() {
        // the alternating scheme bounces between (1,1) and (0,2) here
        let (net, p_d) = two_node();
        let r = coordinate_joint_recursive(&net, &p_d, &Default::default()).unwrap();
        assert_eq!(r.status, JointStatus::MaxIterations);
        assert_eq!(r.history.len(), 101);
        assert_abs_diff_eq!(r.history[1][0], 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.history[2][0], 1.0, epsilon = 1e-6);
        if r.converged() {
            assert_abs_diff_eq!(r.p_g[0], 0.5, epsilon = 1e-6);
        }
    }

    #[test]
    fn sec4_recursion_diverges_and_is_reported() {
        let (net, p_d) = paper_sec4().network_and_demand().unwrap();
        let r = coordinate_joint_recursive(&net, &p_d, &Default::default()).unwrap();
        assert_eq!(r.status, JointStatus::Diverged);
        assert!(r.history.len() > 2);
        if r.converged() {
            let t = coordinate_joint_twoscale(&net, &p_d, &Default::default()).unwrap();
            for (a, b) in r.p_g.iter().zip(&t.p_g) {
                assert!((a - b).abs() <= 1e-3);
            }
        }
    }

    #[test]
    fn recursion_converges_when_generation_is_stiff() {
        // expensive generation relative to lines keeps the alternation contractive
        let g = Graph::from_one_based(3, &[(1, 2), (2, 3)]).unwrap();
        let net = EnergyNetwork::new(
            g,
            vec![GenCoeffs::new(0.01, 0.0, 0.0), GenCoeffs::new(0.02, 0.1, 0.0), GenCoeffs::new(0.015, -0.2, 0.0)],
            vec![FlowCoeffs::new(0.02, 0.0, 0.0); 2],
        );
        let net = EnergyNetwork { gen: net.gen.iter().map(|c| GenCoeffs::new(c.xi * 100.0, c.zeta, 0.0)).collect(), ..net };
        let p_d = vec![1.0, 2.0, 3.0];
        let r = coordinate_joint_recursive(&net, &p_d, &Default::default()).unwrap();
        assert!(r.converged(), "{:?}", r.status);
        let t = coordinate_joint_twoscale(&net, &p_d, &Default::default()).unwrap();
        for (a, b) in r.p_g.iter().zip(&t.p_g) {
            assert!((a - b).abs() <= 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn gauge_shift_leaves_primal_unchanged() {
        let (net, p_d) = paper_sec4().network_and_demand().unwrap();
        let r = coordinate_joint_twoscale(&net, &p_d, &Default::default()).unwrap();
        for c in [-10.0, 0.3, 42.0] {
            let lv: Vec<f64> = r.lambda_v.iter().map(|x| x + c).collect();
            let lam = vec![r.lambda - c; 6];
            let p = generation_from_multipliers(&net, &lam, &lv);
            for (a, b) in p.iter().zip(&r.p_g) {
                assert!((a - b).abs() < 1e-9);
            }
            let f = net.flows_from_multipliers(&lv);
            for (a, b) in f.canonical().iter().zip(r.flows.canonical()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
