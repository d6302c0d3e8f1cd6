//! Centralized reference solvers.
//!
//! The `*_centralized` functions evaluate the closed forms and reduced
//! Laplacian systems directly. [`solve_full_qp`] assembles the whole
//! equality-constrained quadratic program over generation and directed
//! flows and solves its saddle-point system without any of those
//! reductions, so agreement between the two certifies the reductions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cost::{EnergyNetwork, FlowMap};
use crate::flow::{check_balance, flow_forcing, FlowResult};
use crate::generation::{closed_form_lambda, ensure_valid, GenerationResult};
use crate::graph::{complete_graph_laplacian, Matrix};
use crate::joint::{generation_from_multipliers, joint_forcing, JointAlgorithm, JointResult, JointStatus};
use crate::{check_len, CoordError, RunStats};

const EXACT: RunStats = RunStats { converged: true, elapsed: 0.0, residual: 0.0, steps: 0 };

/// Closed-form dispatch.
pub fn solve_generation_centralized(network: &EnergyNetwork, p_d: &[f64]) -> Result<GenerationResult, CoordError> {
    ensure_valid(network)?;
    let n = network.node_count();
    check_len("p_d", p_d.len(), n)?;
    let s: f64 = network.gen.iter().map(|c| 1.0 / (2.0 * c.xi)).sum();
    let demand: f64 = p_d.iter().sum();
    let offset: f64 = network.gen.iter().map(|c| c.zeta / (2.0 * c.xi)).sum();
    let p_g = network.gen.iter().map(|c| (demand / s + offset / s - c.zeta) / (2.0 * c.xi)).collect();
    let lambda = closed_form_lambda(network, p_d);
    Ok(GenerationResult {
        lambda,
        lambda_per_node: vec![lambda; n],
        p_g,
        u_stats: EXACT,
        v_stats: EXACT,
        trace: Vec::new(),
    })
}

/// Solves `M x = b` for a Laplacian-like `M` under the gauge `1^T x = 0`
/// using the bordered system `[[M, 1], [1^T, 0]]`.
fn gauge_fixed_solve(m: &Matrix, b: &[f64]) -> Result<Vec<f64>, CoordError> {
    let n = b.len();
    let mut k = DMatrix::zeros(n + 1, n + 1);
    k.view_mut((0, 0), (n, n)).copy_from(m);
    for i in 0..n {
        k[(i, n)] = 1.0;
        k[(n, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(n + 1);
    rhs.rows_mut(0, n).copy_from_slice(b);
    let sol = k.lu().solve(&rhs).ok_or_else(|| CoordError::Singular("gauge-fixed vertex system".into()))?;
    if !sol.iter().all(|v| v.is_finite()) {
        return Err(CoordError::Singular("gauge-fixed vertex system".into()));
    }
    Ok(sol.rows(0, n).iter().copied().collect())
}

/// Direct solve of `L lambda_v = w`.
pub fn solve_flow_centralized(
    network: &EnergyNetwork,
    p_g: &[f64],
    p_d: &[f64],
    balance_tol: f64,
) -> Result<FlowResult, CoordError> {
    ensure_valid(network)?;
    let n = network.node_count();
    check_len("p_g", p_g.len(), n)?;
    check_len("p_d", p_d.len(), n)?;
    check_balance(p_g, p_d, balance_tol)?;
    let w = flow_forcing(network, p_g, p_d);
    let lambda_v = gauge_fixed_solve(&network.flow_laplacian(), &w)?;
    Ok(FlowResult {
        lambda_e: network.edge_multipliers(&lambda_v),
        flows: network.flows_from_multipliers(&lambda_v),
        lambda_v,
        w,
        stats: EXACT,
        trace: Vec::new(),
    })
}

/// Direct solve of `(L + L_k) lambda_v = w_J`.
pub fn solve_joint_centralized(network: &EnergyNetwork, p_d: &[f64]) -> Result<JointResult, CoordError> {
    ensure_valid(network)?;
    let n = network.node_count();
    check_len("p_d", p_d.len(), n)?;
    let m = network.flow_laplacian() + complete_graph_laplacian(&network.xi())?;
    let lambda_v = gauge_fixed_solve(&m, &joint_forcing(network, p_d))?;
    let num: f64 = network
        .gen
        .iter()
        .zip(lambda_v.iter().zip(p_d))
        .map(|(c, (lv, d))| (c.zeta + lv) / (2.0 * c.xi) + d)
        .sum();
    let den: f64 = network.gen.iter().map(|c| 1.0 / (2.0 * c.xi)).sum();
    let lambda = -num / den;
    Ok(JointResult {
        algorithm: JointAlgorithm::Oracle,
        lambda,
        p_g: generation_from_multipliers(network, &vec![lambda; n], &lambda_v),
        lambda_e: network.edge_multipliers(&lambda_v),
        flows: network.flows_from_multipliers(&lambda_v),
        lambda_v,
        status: JointStatus::Converged,
        iterations: 0,
        residual: 0.0,
        elapsed: 0.0,
        history: Vec::new(),
        inner_runs: 0,
        trace: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QpMode {
    /// Dispatch first, then flows for that dispatch.
    Decoupled,
    /// Generation and flows in one program.
    Joint,
}

/// One equality constraint of the full program.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    GlobalBalance,
    NodeBalance(usize),
    Antisymmetry(usize),
}

/// `[[2Q, A^T], [A, 0]] [x; mu] = [-c; b]` with `Q` diagonal.
///
/// Variables are laid out as `gen` generation entries followed by two
/// directed flows per canonical edge `k`: `p_lo,hi` at `gen + 2k` and
/// `p_hi,lo` at `gen + 2k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct KKTSystem {
    pub matrix: Matrix,
    pub rhs: DVector<f64>,
    pub gen: usize,
    pub flows: usize,
    /// Constraints kept, in row order.
    pub constraints: Vec<Constraint>,
    /// Constraints found linearly dependent on earlier rows.
    pub dropped: Vec<Constraint>,
}

impl KKTSystem {
    pub fn variables(&self) -> usize {
        self.gen + self.flows
    }

    fn assemble(
        q: &[f64],
        c: &[f64],
        rows: Vec<(Constraint, DVector<f64>, f64)>,
        gen: usize,
    ) -> KKTSystem {
        let nv = q.len();
        let mut basis: Vec<DVector<f64>> = Vec::new();
        let mut kept = Vec::new();
        let mut dropped = Vec::new();
        for (kind, row, b) in rows {
            let mut r = row.clone();
            for u in &basis {
                let d = r.dot(u);
                r.axpy(-d, u, 1.0);
            }
            if r.norm() <= 1e-10 * row.norm().max(1.0) {
                dropped.push(kind);
            } else {
                basis.push(r.normalize());
                kept.push((kind, row, b));
            }
        }
        let nc = kept.len();
        let mut matrix = DMatrix::zeros(nv + nc, nv + nc);
        let mut rhs = DVector::zeros(nv + nc);
        for i in 0..nv {
            matrix[(i, i)] = 2.0 * q[i];
            rhs[i] = -c[i];
        }
        for (r, (_, row, b)) in kept.iter().enumerate() {
            for j in 0..nv {
                matrix[(nv + r, j)] = row[j];
                matrix[(j, nv + r)] = row[j];
            }
            rhs[nv + r] = *b;
        }
        KKTSystem {
            matrix,
            rhs,
            gen,
            flows: nv - gen,
            constraints: kept.into_iter().map(|(k, _, _)| k).collect(),
            dropped,
        }
    }

    pub fn solve(&self) -> Result<DVector<f64>, CoordError> {
        if self.rhs.is_empty() {
            return Ok(DVector::zeros(0));
        }
        let sol = self
            .matrix
            .clone()
            .lu()
            .solve(&self.rhs)
            .ok_or_else(|| CoordError::Singular("rank-deficient saddle-point system".into()))?;
        if !sol.iter().all(|v| v.is_finite()) {
            return Err(CoordError::Singular("rank-deficient saddle-point system".into()));
        }
        Ok(sol)
    }
}

/// Generation-only program: minimize generation cost subject to global
/// balance.
pub fn generation_kkt(network: &EnergyNetwork, p_d: &[f64]) -> KKTSystem {
    let n = network.node_count();
    let q: Vec<f64> = network.gen.iter().map(|c| c.xi).collect();
    let c: Vec<f64> = network.gen.iter().map(|c| c.zeta).collect();
    let rows = vec![(Constraint::GlobalBalance, DVector::from_element(n, 1.0), p_d.iter().sum())];
    KKTSystem::assemble(&q, &c, rows, n)
}

/// Node-balance and antisymmetry rows over `gen` generation variables
/// followed by the directed flows, plus the global balance row when
/// `global` is given.
fn flow_rows(network: &EnergyNetwork, gen: usize, rhs: &[f64], global: Option<f64>) -> Vec<(Constraint, DVector<f64>, f64)> {
    let g = &network.graph;
    let n = g.node_count();
    let nv = gen + 2 * g.edge_count();
    let mut rows = Vec::new();
    for i in 0..n {
        let mut row = DVector::zeros(nv);
        if gen > 0 {
            row[i] = 1.0;
        }
        for nb in g.neighbors(i) {
            let e = g.edges()[nb.edge];
            let slot = if e.lo == i { 0 } else { 1 };
            row[gen + 2 * nb.edge + slot] = 1.0;
        }
        rows.push((Constraint::NodeBalance(i), row, rhs[i]));
    }
    for k in 0..g.edge_count() {
        let mut row = DVector::zeros(nv);
        row[gen + 2 * k] = 1.0;
        row[gen + 2 * k + 1] = 1.0;
        rows.push((Constraint::Antisymmetry(k), row, 0.0));
    }
    if let Some(total) = global {
        let mut row = DVector::zeros(nv);
        row.rows_mut(0, gen).fill(1.0);
        rows.push((Constraint::GlobalBalance, row, total));
    }
    rows
}

fn flow_objective(network: &EnergyNetwork) -> (Vec<f64>, Vec<f64>) {
    let mut q = Vec::new();
    let mut c = Vec::new();
    for f in &network.flow {
        q.extend([f.alpha, f.alpha]);
        c.extend([f.beta, -f.beta]);
    }
    (q, c)
}

/// Flow program for fixed generation: node balance
/// `sum_j p_ij = p_i^d - p_i^g` and antisymmetry.
pub fn flow_kkt(network: &EnergyNetwork, p_g: &[f64], p_d: &[f64]) -> KKTSystem {
    let rhs: Vec<f64> = p_d.iter().zip(p_g).map(|(d, g)| d - g).collect();
    let (q, c) = flow_objective(network);
    KKTSystem::assemble(&q, &c, flow_rows(network, 0, &rhs, None), 0)
}

/// Joint program over generation and directed flows.
pub fn joint_kkt(network: &EnergyNetwork, p_d: &[f64]) -> KKTSystem {
    let n = network.node_count();
    let (fq, fc) = flow_objective(network);
    let q: Vec<f64> = network.gen.iter().map(|c| c.xi).chain(fq).collect();
    let c: Vec<f64> = network.gen.iter().map(|c| c.zeta).chain(fc).collect();
    KKTSystem::assemble(&q, &c, flow_rows(network, n, p_d, Some(p_d.iter().sum())), n)
}

/// Primal and dual solution of the full program, with multipliers aligned
/// to the `1^T lambda_v = 0` gauge.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub p_g: Vec<f64>,
    pub flows: FlowMap,
    /// Two entries per canonical edge, `p_lo,hi` then `p_hi,lo`.
    pub directed: Vec<f64>,
    pub lambda: f64,
    pub lambda_v: Vec<f64>,
    pub lambda_e: Vec<f64>,
    pub dropped: Vec<Constraint>,
}

/// Splits saddle-point multipliers into balance, vertex and edge parts.
/// Stationarity only involves `lambda + mu_i` and `mu_i + nu_e`, so
/// shifting the vertex part to zero mean is free.
fn split_multipliers(system: &KKTSystem, sol: &DVector<f64>, n: usize, m: usize) -> (f64, Vec<f64>, Vec<f64>) {
    let nv = system.variables();
    let mut global = 0.0;
    let mut mu = vec![0.0; n];
    let mut nu = vec![0.0; m];
    for (r, kind) in system.constraints.iter().enumerate() {
        let y = sol[nv + r];
        match *kind {
            Constraint::GlobalBalance => global = y,
            Constraint::NodeBalance(i) => mu[i] = y,
            Constraint::Antisymmetry(k) => nu[k] = y,
        }
    }
    let mean = if n > 0 { mu.iter().sum::<f64>() / n as f64 } else { 0.0 };
    (
        global + mean,
        mu.iter().map(|x| x - mean).collect(),
        nu.iter().map(|x| x + mean).collect(),
    )
}

/// Solves the complete program from first principles. Meant for small
/// instances.
pub fn solve_full_qp(network: &EnergyNetwork, p_d: &[f64], mode: QpMode) -> Result<QpSolution, CoordError> {
    ensure_valid(network)?;
    let n = network.node_count();
    let m = network.graph.edge_count();
    check_len("p_d", p_d.len(), n)?;
    let (p_g, lambda_gen, flow_system) = match mode {
        QpMode::Decoupled => {
            let gen = generation_kkt(network, p_d);
            let sol = gen.solve()?;
            let p_g: Vec<f64> = sol.rows(0, n).iter().copied().collect();
            let lambda = sol[n];
            let flow = flow_kkt(network, &p_g, p_d);
            (Some(p_g), Some(lambda), flow)
        }
        QpMode::Joint => (None, None, joint_kkt(network, p_d)),
    };
    let sol = flow_system.solve()?;
    let gen_vars = flow_system.gen;
    let p_g = p_g.unwrap_or_else(|| sol.rows(0, gen_vars).iter().copied().collect());
    let directed: Vec<f64> = sol.rows(gen_vars, 2 * m).iter().copied().collect();
    let (global, lambda_v, lambda_e) = split_multipliers(&flow_system, &sol, n, m);
    let canonical = directed.chunks(2).map(|d| d[0]).collect();
    Ok(QpSolution {
        p_g,
        flows: FlowMap::from_canonical(&network.graph, canonical)?,
        directed,
        lambda: lambda_gen.unwrap_or(global),
        lambda_v,
        lambda_e,
        dropped: flow_system.dropped,
    })
}
