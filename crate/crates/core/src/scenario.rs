//! Scenario files: a network, desired energy levels and solver options.
//!
//! Scenarios are JSON. Node ids may be any distinct integers; they are
//! mapped to positions `1..n` in order of appearance. Edge parameters are
//! given for the `from -> to` orientation and converted to the canonical
//! (lower id first) orientation on load.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{ConsensusOptions, Scheme};
use crate::cost::{EnergyNetwork, FlowCoeffs, GenBounds, GenCoeffs};
use crate::flow::FlowOptions;
use crate::generation::GenerationOptions;
use crate::graph::Graph;
use crate::joint::{RecursiveOptions, TwoScaleOptions};
use crate::ExecMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: i64,
    pub xi: f64,
    pub zeta: f64,
    #[serde(default)]
    pub eta: f64,
    pub p_desired: f64,
    /// Fixed generation, used as the flow input when present on every node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_generation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_g_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_g_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub from: i64,
    pub to: i64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    /// Integration step; `None` derives it from the stability bound.
    pub dt: Option<f64>,
    pub tol: f64,
    pub t_max: f64,
    /// Run the flow and joint multiplier dynamics for exactly this long
    /// instead of until convergence.
    pub horizon: Option<f64>,
    pub inner_tol: f64,
    /// Step cap for each inner consensus of the two-scale scheme.
    pub inner_budget: Option<usize>,
    pub balance_tol: f64,
    pub recursive_eps: f64,
    pub max_iter: usize,
    pub trace_stride: usize,
    pub scheme: Scheme,
    pub mode: ExecMode,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            dt: None,
            tol: 1e-9,
            t_max: 1e4,
            horizon: None,
            inner_tol: 1e-12,
            inner_budget: None,
            balance_tol: 1e-6,
            recursive_eps: 1e-6,
            max_iter: 100,
            trace_stride: 10,
            scheme: Scheme::Rk4,
            mode: ExecMode::Matrix,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<EdgeSpec>,
    #[serde(default)]
    pub solver: SolverSpec,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid scenario:\n{}", list(.0))]
    Invalid(Vec<String>),
}

fn list(v: &[String]) -> String {
    v.iter().map(|s| format!("  - {s}")).collect::<Vec<_>>().join("\n")
}

/// A validated scenario ready to run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub network: EnergyNetwork,
    pub p_d: Vec<f64>,
    /// Inline generation, if every node carries one.
    pub p_g: Option<Vec<f64>>,
    /// External id of each node position.
    pub labels: Vec<i64>,
}

impl fmt::Display for ScenarioSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serde_json::to_string_pretty(self).map_err(|_| fmt::Error)?)
    }
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<ScenarioSpec, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = self.to_string();
        s.push('\n');
        s
    }

    /// Checks everything and builds the network; all problems are reported
    /// together.
    pub fn compile(&self) -> Result<Scenario, ScenarioError> {
        let mut problems = Vec::new();
        let mut index = HashMap::new();
        for (pos, node) in self.nodes.iter().enumerate() {
            if index.insert(node.id, pos).is_some() {
                problems.push(format!("duplicate node id {}", node.id));
            }
        }
        if self.nodes.is_empty() {
            problems.push("scenario has no nodes".into());
        }
        for node in &self.nodes {
            let fields = [("xi", Some(node.xi)), ("zeta", Some(node.zeta)), ("eta", Some(node.eta)), ("p_desired", Some(node.p_desired)), ("p_generation", node.p_generation), ("p_g_min", node.p_g_min), ("p_g_max", node.p_g_max)];
            for (name, v) in fields {
                if v.is_some_and(|v| !v.is_finite()) {
                    problems.push(format!("node {}: {name} is not finite", node.id));
                }
            }
            if !(node.xi > 0.0) {
                problems.push(format!("node {}: xi must be positive, got {}", node.id, node.xi));
            }
            if let (Some(lo), Some(hi)) = (node.p_g_min, node.p_g_max) {
                if lo > hi {
                    problems.push(format!("node {}: p_g_min {lo} exceeds p_g_max {hi}", node.id));
                }
            }
        }
        let inline = self.nodes.iter().filter(|n| n.p_generation.is_some()).count();
        if inline != 0 && inline != self.nodes.len() {
            problems.push(format!("p_generation given for {inline} of {} nodes; give it for all or none", self.nodes.len()));
        }

        let mut pairs = Vec::new();
        let mut seen = HashMap::new();
        let mut coeffs = Vec::new();
        for edge in &self.edges {
            let name = format!("edge ({},{})", edge.from, edge.to);
            for (what, v) in [("alpha", edge.alpha), ("beta", edge.beta), ("gamma", edge.gamma)] {
                if !v.is_finite() {
                    problems.push(format!("{name}: {what} is not finite"));
                }
            }
            if !(edge.alpha > 0.0) {
                problems.push(format!("{name}: alpha must be positive, got {}", edge.alpha));
            }
            let (Some(&a), Some(&b)) = (index.get(&edge.from), index.get(&edge.to)) else {
                for id in [edge.from, edge.to] {
                    if !index.contains_key(&id) {
                        problems.push(format!("{name}: unknown node {id}"));
                    }
                }
                continue;
            };
            if a == b {
                problems.push(format!("{name}: self-loop"));
                continue;
            }
            let key = (a.min(b), a.max(b));
            if seen.insert(key, ()).is_some() {
                problems.push(format!("{name}: duplicate edge"));
                continue;
            }
            pairs.push(key);
            let beta = if a < b { edge.beta } else { -edge.beta };
            coeffs.push((key, FlowCoeffs::new(edge.alpha, beta, edge.gamma)));
        }
        problems.extend(self.solver.problems());
        if !problems.is_empty() {
            return Err(ScenarioError::Invalid(problems));
        }

        let graph = Graph::new(self.nodes.len(), &pairs).map_err(|e| ScenarioError::Invalid(vec![e.to_string()]))?;
        coeffs.sort_by_key(|(k, _)| *k);
        let flow = coeffs.into_iter().map(|(_, c)| c).collect();
        let gen = self.nodes.iter().map(|n| GenCoeffs::new(n.xi, n.zeta, n.eta)).collect();
        let mut network = EnergyNetwork::new(graph, gen, flow);
        if self.nodes.iter().any(|n| n.p_g_min.is_some() || n.p_g_max.is_some()) {
            network = network.with_bounds(
                self.nodes.iter().map(|n| GenBounds { lower: n.p_g_min, upper: n.p_g_max }).collect(),
            );
        }
        if !network.graph.is_connected() {
            return Err(ScenarioError::Invalid(vec!["graph not connected".into()]));
        }
        Ok(Scenario {
            spec: self.clone(),
            p_d: self.nodes.iter().map(|n| n.p_desired).collect(),
            p_g: (inline > 0).then(|| self.nodes.iter().filter_map(|n| n.p_generation).collect()),
            labels: self.nodes.iter().map(|n| n.id).collect(),
            network,
        })
    }

    pub fn network_and_demand(&self) -> Result<(EnergyNetwork, Vec<f64>), ScenarioError> {
        let s = self.compile()?;
        Ok((s.network, s.p_d))
    }
}

impl SolverSpec {
    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let positive = [
            ("tol", Some(self.tol)),
            ("t_max", Some(self.t_max)),
            ("inner_tol", Some(self.inner_tol)),
            ("balance_tol", Some(self.balance_tol)),
            ("recursive_eps", Some(self.recursive_eps)),
            ("dt", self.dt),
            ("horizon", self.horizon),
        ];
        for (name, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    out.push(format!("solver.{name} must be positive, got {v}"));
                }
            }
        }
        if !(self.inner_tol < self.tol) {
            out.push(format!("solver.inner_tol {:e} must be tighter than solver.tol {:e}", self.inner_tol, self.tol));
        }
        if self.max_iter == 0 {
            out.push("solver.max_iter must be at least 1".into());
        }
        if self.trace_stride == 0 {
            out.push("solver.trace_stride must be at least 1".into());
        }
        if self.inner_budget == Some(0) {
            out.push("solver.inner_budget must be at least 1".into());
        }
        out
    }

    fn consensus(&self, trace: bool) -> ConsensusOptions {
        ConsensusOptions {
            dt: self.dt,
            tol: self.tol,
            t_max: self.t_max,
            scheme: self.scheme,
            trace_stride: trace.then_some(self.trace_stride),
            ..Default::default()
        }
    }

    fn maybe_horizon(&self, opts: ConsensusOptions) -> ConsensusOptions {
        match self.horizon {
            Some(t) => opts.horizon(t),
            None => opts,
        }
    }

    pub fn generation_options(&self, mode: ExecMode, trace: bool) -> GenerationOptions {
        GenerationOptions { consensus: self.consensus(trace), balance_tol: self.balance_tol, mode }
    }

    pub fn flow_options(&self, mode: ExecMode, trace: bool) -> FlowOptions {
        FlowOptions { consensus: self.maybe_horizon(self.consensus(trace)), balance_tol: self.balance_tol, mode }
    }

    pub fn recursive_options(&self, mode: ExecMode) -> RecursiveOptions {
        RecursiveOptions {
            eps: vec![self.recursive_eps],
            max_iter: self.max_iter,
            generation: self.generation_options(mode, false),
            flow: FlowOptions { consensus: self.consensus(false), balance_tol: self.balance_tol, mode },
        }
    }

    pub fn twoscale_options(&self, mode: ExecMode, trace: bool) -> TwoScaleOptions {
        TwoScaleOptions {
            outer: self.maybe_horizon(self.consensus(trace)),
            inner: ConsensusOptions { tol: self.inner_tol, max_steps: self.inner_budget, ..self.consensus(false) },
            balance_tol: self.balance_tol,
            mode,
        }
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    ScenarioSpec::from_json(&text)?.compile()
}

const PAPER_SEC4_JSON: &str = include_str!("../scenarios/paper_sec4.json");
const TWO_NODE_JSON: &str = include_str!("../scenarios/two_node.json");

/// Names accepted by [`bundled`].
pub const BUNDLED: [&str; 2] = ["paper_sec4", "two_node"];

/// A scenario shipped with the crate.
pub fn bundled(name: &str) -> Option<ScenarioSpec> {
    let text = match name {
        "paper_sec4" => PAPER_SEC4_JSON,
        "two_node" => TWO_NODE_JSON,
        _ => return None,
    };
    Some(ScenarioSpec::from_json(text).expect("bundled scenarios parse"))
}

/// The six-node case study.
///
/// Desired levels are recovered from node balance of the reported flows.
/// Each generation cost has its vertex at that node's reported dispatch,
/// `m_i + 1020 / (31 xi_i)`, with minimum value zero, so the dispatch has
/// a zero balance multiplier. The reported flow table is matched by a
/// finite run of the flow dynamics, hence the horizon.
pub fn paper_sec4() -> ScenarioSpec {
    let xi = [10.0, 15.0, 12.0, 10.0, 10.0, 15.0];
    let base = [10.0, 10.0, 15.0, 20.0, 5.0, 15.0];
    let p_d = [5.0, 15.0, 20.0, 30.0, 2.0, 20.0];
    let nodes = (0..6)
        .map(|i| {
            let vertex = base[i] + 1020.0 / (31.0 * xi[i]);
            let c = GenCoeffs::from_minimum(xi[i], vertex, 0.0);
            NodeSpec {
                id: i as i64 + 1,
                xi: c.xi,
                zeta: c.zeta,
                eta: c.eta,
                p_desired: p_d[i],
                p_generation: None,
                p_g_min: None,
                p_g_max: None,
            }
        })
        .collect();
    let alpha = [((1, 2), 5.0), ((2, 3), 7.0), ((3, 4), 3.0), ((1, 5), 4.0), ((3, 5), 6.0), ((4, 5), 8.0), ((4, 6), 7.0)];
    let edges = alpha
        .iter()
        .map(|&((from, to), alpha)| EdgeSpec { from, to, alpha, beta: 0.01, gamma: 0.0 })
        .collect();
    ScenarioSpec {
        name: "paper_sec4".into(),
        nodes,
        edges,
        solver: SolverSpec { horizon: Some(200.0), ..Default::default() },
    }
}

/// Two unit-cost nodes joined by a unit-cost line, demand `(0, 2)`.
pub fn two_node() -> ScenarioSpec {
    let node = |id, p_desired| NodeSpec {
        id,
        xi: 1.0,
        zeta: 0.0,
        eta: 0.0,
        p_desired,
        p_generation: None,
        p_g_min: None,
        p_g_max: None,
    };
    ScenarioSpec {
        name: "two_node".into(),
        nodes: vec![node(1, 0.0), node(2, 2.0)],
        edges: vec![EdgeSpec { from: 1, to: 2, alpha: 1.0, beta: 0.0, gamma: 0.0 }],
        solver: SolverSpec::default(),
    }
}

/// Seeded random connected scenario: a random spanning tree plus extra
/// edges, `xi, alpha` in `[0.5, 10]`, `beta` in `[-1, 1]`, `zeta` in
/// `[-10, 10]` and desired levels in `[0, 20]`.
pub fn generate_random(n: usize, seed: u64) -> ScenarioSpec {
    assert!(n >= 1, "need at least one node");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = (1..=n)
        .map(|id| NodeSpec {
            id: id as i64,
            xi: rng.random_range(0.5..=10.0),
            zeta: rng.random_range(-10.0..=10.0),
            eta: 0.0,
            p_desired: rng.random_range(0.0..=20.0),
            p_generation: None,
            p_g_min: None,
            p_g_max: None,
        })
        .collect();
    let mut pairs = Vec::new();
    for v in 2..=n {
        pairs.push((rng.random_range(1..v), v));
    }
    for a in 1..=n {
        for b in a + 1..=n {
            if !pairs.contains(&(a, b)) && rng.random_bool(0.3) {
                pairs.push((a, b));
            }
        }
    }
    let edges = pairs
        .into_iter()
        .map(|(a, b)| EdgeSpec {
            from: a as i64,
            to: b as i64,
            alpha: rng.random_range(0.5..=10.0),
            beta: rng.random_range(-1.0..=1.0),
            gamma: 0.0,
        })
        .collect();
    ScenarioSpec { name: format!("random-n{n}-s{seed}"), nodes, edges, solver: SolverSpec::default() }
}
