//! Cost parameters for generation and flow, and the network that carries
//! them.
//!
//! Flow costs are summed over both orientations of every undirected edge:
//! with `alpha_ji = alpha_ij`, `beta_ji = -beta_ij`, `gamma_ji = gamma_ij` and
//! `p_ji = -p_ij`, each edge contributes `2 alpha p^2 + 2 beta p + 2 gamma`.

use std::fmt;

use thiserror::Error;

use crate::graph::{laplacian_from_aligned, Edge, Graph, Matrix};

/// Quadratic generation cost `xi p^2 + zeta p + eta` at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenCoeffs {
    pub xi: f64,
    pub zeta: f64,
    pub eta: f64,
}

impl GenCoeffs {
    pub fn new(xi: f64, zeta: f64, eta: f64) -> Self {
        GenCoeffs { xi, zeta, eta }
    }

    pub fn eval(&self, p: f64) -> f64 {
        self.xi * p * p + self.zeta * p + self.eta
    }

    /// Coefficients of the parabola with curvature `xi` and vertex
    /// `(min_location, min_value)`.
    pub fn from_minimum(xi: f64, min_location: f64, min_value: f64) -> Self {
        GenCoeffs {
            xi,
            zeta: -2.0 * xi * min_location,
            eta: min_value + xi * min_location * min_location,
        }
    }

    /// Vertex `(location, value)` of the parabola.
    pub fn minimum(&self) -> (f64, f64) {
        let loc = -self.zeta / (2.0 * self.xi);
        (loc, self.eval(loc))
    }
}

/// Flow cost `alpha p^2 + beta p + gamma` for the canonical orientation of an
/// edge. The reverse orientation is derived, never stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowCoeffs {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl FlowCoeffs {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        FlowCoeffs { alpha, beta, gamma }
    }

    pub fn reversed(&self) -> Self {
        FlowCoeffs { alpha: self.alpha, beta: -self.beta, gamma: self.gamma }
    }

    /// Coefficients seen from `from` when the edge is traversed towards the
    /// other endpoint.
    pub fn oriented(&self, e: Edge, from: usize) -> Self {
        if from == e.lo {
            *self
        } else {
            self.reversed()
        }
    }

    pub fn eval(&self, p: f64) -> f64 {
        self.alpha * p * p + self.beta * p + self.gamma
    }
}

/// Optional generation limits at one node.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GenBounds {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl GenBounds {
    pub fn contains(&self, p: f64) -> bool {
        self.lower.is_none_or(|lo| p >= lo) && self.upper.is_none_or(|hi| p <= hi)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowMapError {
    #[error("flows on edge {edge} are not antisymmetric: p_ij = {forward}, p_ji = {backward}")]
    NotAntisymmetric { edge: Edge, forward: f64, backward: f64 },
    #[error("flow given between non-adjacent nodes {} and {}", .0 + 1, .1 + 1)]
    NotAnEdge(usize, usize),
    #[error("expected {expected} canonical flows, got {got}")]
    Length { expected: usize, got: usize },
}

/// Antisymmetric edge flows: one value per canonical edge, `p_lo,hi`, i.e.
/// the energy flowing into the lower-id endpoint from the higher one.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMap {
    canonical: Vec<f64>,
}

impl FlowMap {
    pub fn zeros(g: &Graph) -> Self {
        FlowMap { canonical: vec![0.0; g.edge_count()] }
    }

    pub fn from_canonical(g: &Graph, values: Vec<f64>) -> Result<Self, FlowMapError> {
        if values.len() != g.edge_count() {
            return Err(FlowMapError::Length { expected: g.edge_count(), got: values.len() });
        }
        Ok(FlowMap { canonical: values })
    }

    /// Builds a map from directed entries `(i, j, p_ij)`. When both
    /// orientations of an edge are given they must cancel.
    pub fn from_directed(g: &Graph, entries: &[(usize, usize, f64)]) -> Result<Self, FlowMapError> {
        let mut seen: Vec<Option<f64>> = vec![None; g.edge_count()];
        for &(i, j, p) in entries {
            let k = g.edge_index(i, j).ok_or(FlowMapError::NotAnEdge(i, j))?;
            let e = g.edges()[k];
            let canon = if i == e.lo { p } else { -p };
            match seen[k] {
                None => seen[k] = Some(canon),
                Some(prev) => {
                    if (prev - canon).abs() > 1e-12 * (1.0 + prev.abs()) {
                        let (forward, backward) = if i == e.lo { (p, -prev) } else { (prev, p) };
                        return Err(FlowMapError::NotAntisymmetric { edge: e, forward, backward });
                    }
                }
            }
        }
        Ok(FlowMap { canonical: seen.into_iter().map(|v| v.unwrap_or(0.0)).collect() })
    }

    pub fn canonical(&self) -> &[f64] {
        &self.canonical
    }

    pub fn canonical_mut(&mut self) -> &mut [f64] {
        &mut self.canonical
    }

    /// Flow into node `i` from node `j`.
    pub fn get(&self, g: &Graph, i: usize, j: usize) -> Option<f64> {
        let k = g.edge_index(i, j)?;
        let v = self.canonical[k];
        Some(if i == g.edges()[k].lo { v } else { -v })
    }

    /// Net inflow at every node, `sum_j p_ij`.
    pub fn net_inflow(&self, g: &Graph) -> Vec<f64> {
        let mut net = vec![0.0; g.node_count()];
        for (e, &p) in g.edges().iter().zip(&self.canonical) {
            net[e.lo] += p;
            net[e.hi] -= p;
        }
        net
    }
}

/// `sum_i xi_i p_i^2 + zeta_i p_i + eta_i`.
pub fn generation_cost(gen: &[GenCoeffs], p: &[f64]) -> f64 {
    assert_eq!(gen.len(), p.len(), "generation vector length mismatch");
    gen.iter().zip(p).map(|(c, &x)| c.eval(x)).sum()
}

/// Flow cost summed over both orientations of every edge.
pub fn flow_cost(flow: &[FlowCoeffs], flows: &FlowMap) -> f64 {
    assert_eq!(flow.len(), flows.canonical.len(), "flow map length mismatch");
    flow.iter()
        .zip(&flows.canonical)
        .map(|(c, &p)| c.eval(p) + c.reversed().eval(-p))
        .sum()
}

/// A problem-level validation failure.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonPositiveXi { node: usize, xi: f64 },
    NonPositiveAlpha { edge: Edge, alpha: f64 },
    NonFinite { what: String },
    GenParamCount { expected: usize, got: usize },
    FlowParamCount { expected: usize, got: usize },
    BoundsCount { expected: usize, got: usize },
    InvertedBounds { node: usize, lower: f64, upper: f64 },
    Disconnected,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveXi { node, xi } => {
                write!(f, "node {}: xi must be positive, got {xi}", node + 1)
            }
            Violation::NonPositiveAlpha { edge, alpha } => {
                write!(f, "edge {edge}: alpha must be positive, got {alpha}")
            }
            Violation::NonFinite { what } => write!(f, "{what} is not finite"),
            Violation::GenParamCount { expected, got } => {
                write!(f, "expected generation parameters for {expected} nodes, got {got}")
            }
            Violation::FlowParamCount { expected, got } => {
                write!(f, "expected flow parameters for {expected} edges, got {got}")
            }
            Violation::BoundsCount { expected, got } => {
                write!(f, "expected generation bounds for {expected} nodes, got {got}")
            }
            Violation::InvertedBounds { node, lower, upper } => {
                write!(f, "node {}: lower bound {lower} exceeds upper bound {upper}", node + 1)
            }
            Violation::Disconnected => write!(f, "graph not connected"),
        }
    }
}

/// Graph plus per-node generation costs and per-edge flow costs.
///
/// `flow[k]` belongs to `graph.edges()[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyNetwork {
    pub graph: Graph,
    pub gen: Vec<GenCoeffs>,
    pub flow: Vec<FlowCoeffs>,
    pub bounds: Option<Vec<GenBounds>>,
}

impl EnergyNetwork {
    pub fn new(graph: Graph, gen: Vec<GenCoeffs>, flow: Vec<FlowCoeffs>) -> Self {
        EnergyNetwork { graph, gen, flow, bounds: None }
    }

    pub fn with_bounds(mut self, bounds: Vec<GenBounds>) -> Self {
        self.bounds = Some(bounds);
        self
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn xi(&self) -> Vec<f64> {
        self.gen.iter().map(|c| c.xi).collect()
    }

    /// Every problem found, in node then edge order. Empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.graph.node_count();
        let m = self.graph.edge_count();
        if self.gen.len() != n {
            out.push(Violation::GenParamCount { expected: n, got: self.gen.len() });
        }
        if self.flow.len() != m {
            out.push(Violation::FlowParamCount { expected: m, got: self.flow.len() });
        }
        for (i, c) in self.gen.iter().enumerate() {
            if !(c.xi > 0.0) {
                out.push(Violation::NonPositiveXi { node: i, xi: c.xi });
            }
            for (name, v) in [("xi", c.xi), ("zeta", c.zeta), ("eta", c.eta)] {
                if !v.is_finite() {
                    out.push(Violation::NonFinite { what: format!("node {} {name}", i + 1) });
                }
            }
        }
        for (e, c) in self.graph.edges().iter().zip(&self.flow) {
            if !(c.alpha > 0.0) {
                out.push(Violation::NonPositiveAlpha { edge: *e, alpha: c.alpha });
            }
            for (name, v) in [("alpha", c.alpha), ("beta", c.beta), ("gamma", c.gamma)] {
                if !v.is_finite() {
                    out.push(Violation::NonFinite { what: format!("edge {e} {name}") });
                }
            }
        }
        if let Some(bounds) = &self.bounds {
            if bounds.len() != n {
                out.push(Violation::BoundsCount { expected: n, got: bounds.len() });
            }
            for (i, b) in bounds.iter().enumerate() {
                if let (Some(lower), Some(upper)) = (b.lower, b.upper) {
                    if lower > upper {
                        out.push(Violation::InvertedBounds { node: i, lower, upper });
                    }
                }
            }
        }
        if !self.graph.is_connected() {
            out.push(Violation::Disconnected);
        }
        out
    }

    pub fn generation_cost(&self, p_g: &[f64]) -> f64 {
        generation_cost(&self.gen, p_g)
    }

    pub fn flow_cost(&self, flows: &FlowMap) -> f64 {
        flow_cost(&self.flow, flows)
    }

    /// Edge weights `1 / (4 alpha_ij)` of the flow-multiplier Laplacian.
    pub fn flow_weights(&self) -> Vec<f64> {
        self.flow.iter().map(|c| 1.0 / (4.0 * c.alpha)).collect()
    }

    pub fn flow_laplacian(&self) -> Matrix {
        laplacian_from_aligned(&self.graph, &self.flow_weights())
    }

    /// `sum_{j in N_i} beta_ij / (2 alpha_ij)` with oriented `beta`.
    pub fn beta_pressure(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.node_count()];
        for (e, c) in self.graph.edges().iter().zip(&self.flow) {
            let t = c.beta / (2.0 * c.alpha);
            out[e.lo] += t;
            out[e.hi] -= t;
        }
        out
    }

    /// Optimal flow on every edge given vertex multipliers:
    /// `p_ij = -(beta_ij + lambda_i/2 - lambda_j/2) / (2 alpha_ij)`.
    pub fn flows_from_multipliers(&self, lambda_v: &[f64]) -> FlowMap {
        let canonical = self
            .graph
            .edges()
            .iter()
            .zip(&self.flow)
            .map(|(e, c)| -(c.beta + 0.5 * lambda_v[e.lo] - 0.5 * lambda_v[e.hi]) / (2.0 * c.alpha))
            .collect();
        FlowMap { canonical }
    }

    /// Edge multipliers `-(lambda_i + lambda_j) / 2` in canonical order.
    pub fn edge_multipliers(&self, lambda_v: &[f64]) -> Vec<f64> {
        self.graph.edges().iter().map(|e| -0.5 * (lambda_v[e.lo] + lambda_v[e.hi])).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sec4_graph() -> Graph {
        Graph::from_one_based(6, &[(1, 2), (2, 3), (3, 4), (1, 5), (3, 5), (4, 5), (4, 6)]).unwrap()
    }

    fn sec4_flow_params(g: &Graph) -> Vec<FlowCoeffs> {
        let alpha = |a: usize, b: usize| match (a + 1, b + 1) {
            (1, 2) => 5.0,
            (2, 3) => 7.0,
            (3, 4) => 3.0,
            (1, 5) => 4.0,
            (3, 5) => 6.0,
            (4, 5) => 8.0,
            (4, 6) => 7.0,
            _ => unreachable!(),
        };
        g.edges().iter().map(|e| FlowCoeffs::new(alpha(e.lo, e.hi), 0.01, 0.0)).collect()
    }

    fn flows_1based(g: &Graph, entries: &[(usize, usize, f64)]) -> FlowMap {
        let zero: Vec<_> = entries.iter().map(|&(a, b, p)| (a - 1, b - 1, p)).collect();
        FlowMap::from_directed(g, &zero).unwrap()
    }

    #[test]
    fn generation_cost_basics() {
        let gen = [GenCoeffs::new(1.0, 0.0, 0.0); 2];
        assert_eq!(generation_cost(&gen, &[1.0, 2.0]), 5.0);
        let gen = [GenCoeffs::new(3.0, 1.0, 2.5), GenCoeffs::new(1.0, -4.0, 0.5)];
        assert_eq!(generation_cost(&gen, &[0.0, 0.0]), 3.0);
    }

    #[test]
    fn single_edge_is_counted_twice() {
        let g = Graph::path(2);
        let flows = FlowMap::from_canonical(&g, vec![1.0]).unwrap();
        assert_eq!(flow_cost(&[FlowCoeffs::new(1.0, 0.0, 0.0)], &flows), 2.0);
        assert_eq!(flow_cost(&[FlowCoeffs::new(1.0, 0.5, 0.25)], &flows), 2.0 + 1.0 + 0.5);
    }

    #[test]
    fn reported_decoupled_flow_cost() {
        let g = sec4_graph();
        let flows = flows_1based(
            &g,
            &[
                (1, 2, -4.9972),
                (1, 5, -3.2888),
                (2, 3, -2.1840),
                (3, 4, -4.4449),
                (3, 5, 4.5182),
                (4, 5, 5.0548),
                (4, 6, -2.7919),
            ],
        );
        let c = flow_cost(&sec4_flow_params(&g), &flows);
        assert!((c - 1284.3).abs() <= 0.5, "{c}");
    }

    #[test]
    fn reported_joint_flow_cost() {
        let g = sec4_graph();
        let flows = flows_1based(
            &g,
            &[
                (1, 2, -3.4592),
                (1, 5, -1.4750),
                (2, 3, -0.7190),
                (3, 4, -2.1203),
                (3, 5, 2.7364),
                (4, 5, 2.8468),
                (4, 6, -0.6328),
            ],
        );
        let c = flow_cost(&sec4_flow_params(&g), &flows);
        assert!((c - 396.35).abs() <= 0.5, "{c}");
        // the beta term is what brings the reported value to four decimals
        assert!((c - 396.3495).abs() <= 1e-3, "{c}");
    }

    #[test]
    fn reported_generation_cost_gap() {
        // with zeta_i = -2 xi_i p_i the gap is sum xi_i (q_i - p_i)^2
        let xi = [10.0, 15.0, 12.0, 10.0, 10.0, 15.0];
        let dec = [13.2903, 12.1935, 17.7419, 23.2903, 8.2903, 17.1935];
        let joint = [9.9318, 12.2600, 18.6629, 25.6667, 6.1108, 19.3678];
        let gen: Vec<_> = xi.iter().zip(&dec).map(|(&x, &p)| GenCoeffs::from_minimum(x, p, 0.0)).collect();
        let gap = generation_cost(&gen, &joint) - generation_cost(&gen, &dec);
        assert!((gap - 297.92).abs() <= 0.5, "{gap}");
        assert!((gap - (857.2791 - 559.3548)).abs() <= 0.5);
    }

    #[test]
    fn vertex_form() {
        assert_eq!(GenCoeffs::from_minimum(1.0, 0.0, 0.0), GenCoeffs::new(1.0, 0.0, 0.0));
        assert_eq!(GenCoeffs::from_minimum(10.0, 10.0, 0.0), GenCoeffs::new(10.0, -200.0, 1000.0));
        let c = GenCoeffs::from_minimum(2.5, -3.25, 7.0);
        let (loc, val) = c.minimum();
        assert_abs_diff_eq!(loc, -3.25, epsilon = 1e-12);
        assert_abs_diff_eq!(val, 7.0, epsilon = 1e-12);
    }

    #[test]
    fn directed_flows_must_cancel() {
        let g = Graph::path(3);
        let ok = FlowMap::from_directed(&g, &[(0, 1, 2.0), (1, 0, -2.0), (2, 1, 1.5)]).unwrap();
        assert_eq!(ok.canonical(), &[2.0, -1.5]);
        assert_eq!(ok.get(&g, 1, 0), Some(-2.0));
        assert_eq!(ok.net_inflow(&g), vec![2.0, -3.5, 1.5]);
        let bad = FlowMap::from_directed(&g, &[(0, 1, 2.0), (1, 0, 2.0)]);
        assert!(matches!(bad, Err(FlowMapError::NotAntisymmetric { .. })));
        assert!(matches!(FlowMap::from_directed(&g, &[(0, 2, 1.0)]), Err(FlowMapError::NotAnEdge(0, 2))));
    }

    #[test]
    fn validation() {
        let g = sec4_graph();
        let gen = vec![GenCoeffs::new(10.0, 0.0, 0.0); 6];
        let net = EnergyNetwork::new(g.clone(), gen.clone(), sec4_flow_params(&g));
        assert!(net.validate().is_empty());

        let mut bad = net.clone();
        let k = g.edge_index(0, 2);
        assert_eq!(k, None);
        let k = g.edge_index(2, 4).unwrap();
        bad.flow[k].alpha = 0.0;
        bad.gen[1].xi = -1.0;
        let v = bad.validate();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].to_string(), "node 2: xi must be positive, got -1");
        assert_eq!(v[1].to_string(), "edge (3,5): alpha must be positive, got 0");

        let split = Graph::new(2, &[]).unwrap();
        let net = EnergyNetwork::new(split, gen[..2].to_vec(), vec![]);
        assert_eq!(net.validate(), vec![Violation::Disconnected]);
        assert_eq!(Violation::Disconnected.to_string(), "graph not connected");

        let inverted = EnergyNetwork::new(Graph::path(2), gen[..2].to_vec(), vec![FlowCoeffs::new(1.0, 0.0, 0.0)])
            .with_bounds(vec![GenBounds { lower: Some(2.0), upper: Some(1.0) }, GenBounds::default()]);
        assert!(matches!(inverted.validate()[..], [Violation::InvertedBounds { node: 0, .. }]));
    }

    proptest! {
        #[test]
        fn flow_cost_ignores_orientation(
            alpha in 0.1f64..10.0, beta in -2.0f64..2.0, gamma in -1.0f64..1.0, p in -20.0f64..20.0,
        ) {
            let g = Graph::path(2);
            let fwd = flow_cost(&[FlowCoeffs::new(alpha, beta, gamma)], &FlowMap::from_canonical(&g, vec![p]).unwrap());
            // the same physical flow described from the other endpoint
            let c = FlowCoeffs::new(alpha, beta, gamma).reversed();
            let back = c.eval(-p) + c.reversed().eval(p);
            prop_assert!((fwd - back).abs() <= 1e-9 * (1.0 + fwd.abs()));
        }

        #[test]
        fn generation_cost_strictly_convex(
            xi in prop::collection::vec(0.1f64..10.0, 4),
            zeta in prop::collection::vec(-5.0f64..5.0, 4),
            p in prop::collection::vec(-10.0f64..10.0, 4),
            q in prop::collection::vec(-10.0f64..10.0, 4),
        ) {
            prop_assume!(p.iter().zip(&q).any(|(a, b)| (a - b).abs() > 1e-3));
            let gen: Vec<_> = xi.iter().zip(&zeta).map(|(&x, &z)| GenCoeffs::new(x, z, 1.0)).collect();
            let mid: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
            prop_assert!(generation_cost(&gen, &mid) < 0.5 * (generation_cost(&gen, &p) + generation_cost(&gen, &q)));
        }
    }
}
