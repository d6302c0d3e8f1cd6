//! Undirected graphs with a fixed canonical edge orientation, plus the
//! Laplacian and incidence algebra the coordination laws are built on.
//!
//! Nodes are addressed by 0-based index internally; `Display` impls print
//! 1-based ids so messages line up with scenario files.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use nalgebra::DMatrix;
use thiserror::Error;

/// Dense real matrix used throughout the crate.
pub type Matrix = DMatrix<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("edge {0} is a self-loop")]
    SelfLoop(Edge),
    #[error("edge {0} is listed more than once")]
    DuplicateEdge(Edge),
    #[error("edge ({}, {}) references a node outside 1..={n}", .from + 1, .to + 1)]
    NodeOutOfRange { from: usize, to: usize, n: usize },
    #[error("no weight given for edge {0}")]
    MissingWeight(Edge),
    #[error("weight of edge {edge} must be positive, got {weight}")]
    NonPositiveWeight { edge: Edge, weight: f64 },
    #[error("node {} has non-positive coefficient {value}", .node + 1)]
    NonPositiveNodeWeight { node: usize, value: f64 },
    #[error("graph has no nodes")]
    Empty,
}

/// An undirected edge in canonical orientation (`lo < hi`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub lo: usize,
    pub hi: usize,
}

impl Edge {
    /// Canonicalises an unordered pair. Returns `None` for a self-loop.
    pub fn new(a: usize, b: usize) -> Option<Edge> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(Edge { lo: a, hi: b }),
            std::cmp::Ordering::Greater => Some(Edge { lo: b, hi: a }),
            std::cmp::Ordering::Equal => None,
        }
    }

    /// The endpoint opposite `node`.
    pub fn other(&self, node: usize) -> usize {
        if node == self.lo {
            self.hi
        } else {
            self.lo
        }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.lo + 1, self.hi + 1)
    }
}

/// Neighbor entry: the adjacent node and the index of the shared edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    pub node: usize,
    pub edge: usize,
}

/// Immutable undirected graph. Edges are stored once, sorted, in canonical
/// orientation; that orientation is the one used for incidence columns and
/// for reporting flows.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
    neighbors: Vec<Vec<Neighbor>>,
}

impl Graph {
    /// Builds a graph on nodes `0..n` from 0-based endpoint pairs in any
    /// orientation.
    pub fn new(n: usize, pairs: &[(usize, usize)]) -> Result<Graph, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut edges = Vec::with_capacity(pairs.len());
        for &(a, b) in pairs {
            if a >= n || b >= n {
                return Err(GraphError::NodeOutOfRange { from: a, to: b, n });
            }
            let e = Edge::new(a, b).ok_or(GraphError::SelfLoop(Edge { lo: a, hi: b }))?;
            edges.push(e);
        }
        edges.sort();
        if let Some(w) = edges.windows(2).find(|w| w[0] == w[1]) {
            return Err(GraphError::DuplicateEdge(w[0]));
        }
        let mut neighbors = vec![Vec::new(); n];
        for (k, e) in edges.iter().enumerate() {
            neighbors[e.lo].push(Neighbor { node: e.hi, edge: k });
            neighbors[e.hi].push(Neighbor { node: e.lo, edge: k });
        }
        for list in &mut neighbors {
            list.sort_by_key(|nb| nb.node);
        }
        Ok(Graph { n, edges, neighbors })
    }

    /// Same as [`Graph::new`] but with 1-based endpoint ids.
    pub fn from_one_based(n: usize, pairs: &[(usize, usize)]) -> Result<Graph, GraphError> {
        let zero: Vec<(usize, usize)> = pairs
            .iter()
            .map(|&(a, b)| (a.wrapping_sub(1), b.wrapping_sub(1)))
            .collect();
        Graph::new(n, &zero)
    }

    /// Path graph 0-1-...-(n-1).
    pub fn path(n: usize) -> Graph {
        let pairs: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::new(n, &pairs).expect("path graph is well formed")
    }

    /// Complete graph on `n` nodes.
    pub fn complete(n: usize) -> Graph {
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                pairs.push((i, j));
            }
        }
        Graph::new(n, &pairs).expect("complete graph is well formed")
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[Neighbor] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    /// Index of the canonical edge joining `a` and `b`, if any.
    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        let e = Edge::new(a, b)?;
        self.edges.binary_search(&e).ok()
    }

    /// True iff the graph is a single connected component.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for nb in &self.neighbors[v] {
                if !seen[nb.node] {
                    seen[nb.node] = true;
                    count += 1;
                    queue.push_back(nb.node);
                }
            }
        }
        count == self.n
    }
}

/// Positive weight per canonical edge.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EdgeWeights(BTreeMap<Edge, f64>);

impl EdgeWeights {
    pub fn new() -> Self {
        Self::default()
    }

    /// Weights for every edge of `g`, computed from the edge index.
    pub fn from_fn(g: &Graph, mut f: impl FnMut(usize, Edge) -> f64) -> Self {
        EdgeWeights(g.edges().iter().enumerate().map(|(k, &e)| (e, f(k, e))).collect())
    }

    pub fn uniform(g: &Graph, w: f64) -> Self {
        Self::from_fn(g, |_, _| w)
    }

    pub fn insert(&mut self, e: Edge, w: f64) {
        self.0.insert(e, w);
    }

    pub fn get(&self, e: Edge) -> Option<f64> {
        self.0.get(&e).copied()
    }

    /// Dense per-edge vector aligned with `g.edges()`, checking coverage and
    /// positivity.
    pub fn aligned(&self, g: &Graph) -> Result<Vec<f64>, GraphError> {
        g.edges()
            .iter()
            .map(|&e| match self.get(e) {
                None => Err(GraphError::MissingWeight(e)),
                Some(w) if !(w > 0.0) => Err(GraphError::NonPositiveWeight { edge: e, weight: w }),
                Some(w) => Ok(w),
            })
            .collect()
    }
}

/// `L = D - A` with `A(i,j) = w(i,j)` on edges.
pub fn weighted_laplacian(g: &Graph, w: &EdgeWeights) -> Result<Matrix, GraphError> {
    let aligned = w.aligned(g)?;
    Ok(laplacian_from_aligned(g, &aligned))
}

/// Laplacian from weights already aligned with `g.edges()`.
pub(crate) fn laplacian_from_aligned(g: &Graph, w: &[f64]) -> Matrix {
    let n = g.node_count();
    let mut l = Matrix::zeros(n, n);
    for (e, &wk) in g.edges().iter().zip(w) {
        l[(e.lo, e.hi)] -= wk;
        l[(e.hi, e.lo)] -= wk;
        l[(e.lo, e.lo)] += wk;
        l[(e.hi, e.hi)] += wk;
    }
    l
}

/// Unit-weight Laplacian.
pub fn unweighted_laplacian(g: &Graph) -> Matrix {
    laplacian_from_aligned(g, &vec![1.0; g.edge_count()])
}

/// Node-by-edge incidence matrix: column `k` has `+1` at the lower endpoint
/// and `-1` at the higher endpoint of edge `k`.
pub fn incidence_matrix(g: &Graph) -> Matrix {
    let mut h = Matrix::zeros(g.node_count(), g.edge_count());
    for (k, e) in g.edges().iter().enumerate() {
        h[(e.lo, k)] = 1.0;
        h[(e.hi, k)] = -1.0;
    }
    h
}

/// Laplacian of the complete graph whose `(i,j)` weight is
/// `1 / (2 xi_i xi_j sum_l 1/xi_l)`.
///
/// This is the coupling matrix that appears when the generation variables
/// are eliminated from the joint generation/flow optimality conditions.
pub fn complete_graph_laplacian(xi: &[f64]) -> Result<Matrix, GraphError> {
    if xi.is_empty() {
        return Err(GraphError::Empty);
    }
    if let Some((node, &value)) = xi.iter().enumerate().find(|(_, &x)| !(x > 0.0)) {
        return Err(GraphError::NonPositiveNodeWeight { node, value });
    }
    let n = xi.len();
    let inv_sum: f64 = xi.iter().map(|x| 1.0 / x).sum();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let w = 1.0 / (2.0 * xi[i] * xi[j] * inv_sum);
            l[(i, j)] = -w;
            l[(j, i)] = -w;
            l[(i, i)] += w;
            l[(j, j)] += w;
        }
    }
    Ok(l)
}

/// Maximum absolute row sum; an upper bound on the spectral radius.
pub fn inf_norm(m: &Matrix) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
