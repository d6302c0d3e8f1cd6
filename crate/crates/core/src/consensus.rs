//! Fixed-step integration of linear consensus-type dynamics
//! `x' = -M x + b`, with convergence detection.
//!
//! The integrator is generic over a right-hand side so the same recurrence
//! drives dense matrix products and neighbor-message rounds (see
//! [`crate::agents`]).

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{inf_norm, unweighted_laplacian, Graph, Matrix};

/// Largest `dt * ||M||` the integrator accepts before shrinking the step.
pub const STABILITY_LIMIT: f64 = 2.5;

const OVERFLOW_GUARD: f64 = 1e150;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConsensusError {
    #[error("unstable system: state grew beyond {OVERFLOW_GUARD:e} at t = {time}")]
    Unstable { time: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid integration options: {0}")]
    Options(String),
    #[error("consensus requires a connected graph")]
    Disconnected,
    #[error("degenerate denominator in ratio consensus at node {}: {value:e}", .node + 1)]
    DegenerateDenominator { node: usize, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    Rk4,
    Euler,
}

/// When integration stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StopRule {
    /// Stop as soon as `||x'||_inf <= tol`, or at `t_max`.
    #[default]
    Converge,
    /// Integrate to exactly `t_max` regardless of the residual.
    Horizon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusOptions {
    /// Step size; `None` picks `1 / ||M||_inf`.
    pub dt: Option<f64>,
    pub tol: f64,
    pub t_max: f64,
    pub stop: StopRule,
    pub scheme: Scheme,
    /// Hard cap on the number of steps (inner-loop budget).
    pub max_steps: Option<usize>,
    /// Record the state every `k` steps.
    pub trace_stride: Option<usize>,
}

impl Default for ConsensusOptions {
    fn default() -> Self {
        ConsensusOptions {
            dt: None,
            tol: 1e-9,
            t_max: 1e4,
            stop: StopRule::Converge,
            scheme: Scheme::Rk4,
            max_steps: None,
            trace_stride: None,
        }
    }
}

impl ConsensusOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn horizon(mut self, t: f64) -> Self {
        self.t_max = t;
        self.stop = StopRule::Horizon;
        self
    }

    pub fn validate(&self) -> Result<(), ConsensusError> {
        if !(self.tol > 0.0) {
            return Err(ConsensusError::Options(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.t_max > 0.0) {
            return Err(ConsensusError::Options(format!("t_max must be positive, got {}", self.t_max)));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(ConsensusError::Options(format!("dt must be positive, got {dt}")));
            }
        }
        if self.trace_stride == Some(0) {
            return Err(ConsensusError::Options("trace stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Step size honoring the stability bound for a system with
    /// `||M|| <= bound`.
    pub fn resolve_dt(&self, bound: f64) -> f64 {
        if bound <= 0.0 {
            return self.dt.unwrap_or(1.0);
        }
        match self.dt {
            None => 1.0 / bound,
            Some(dt) if dt * bound > STABILITY_LIMIT => STABILITY_LIMIT / bound,
            Some(dt) => dt,
        }
    }
}

/// Outcome of one integration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusRun {
    pub state: DVector<f64>,
    pub converged: bool,
    /// Simulated time at termination.
    pub elapsed: f64,
    /// `||x'||_inf` at termination.
    pub residual: f64,
    pub steps: usize,
    pub dt: f64,
    pub trace: Vec<(f64, DVector<f64>)>,
}

/// Right-hand side `f(x)` of an autonomous ODE.
pub trait Rhs {
    fn dim(&self) -> usize;
    fn eval(&mut self, x: &DVector<f64>, out: &mut DVector<f64>) -> Result<(), ConsensusError>;
}

/// Integrates `x' = f(x)` from `x0` with fixed step `dt`.
pub fn solve<R: Rhs + ?Sized>(
    rhs: &mut R,
    x0: DVector<f64>,
    dt: f64,
    opts: &ConsensusOptions,
) -> Result<ConsensusRun, ConsensusError> {
    opts.validate()?;
    let n = rhs.dim();
    if x0.len() != n {
        return Err(ConsensusError::Dimension(format!("initial state has {} entries, system has {n}", x0.len())));
    }
    let mut x = x0;
    let mut k1 = DVector::zeros(n);
    let mut k2 = DVector::zeros(n);
    let mut k3 = DVector::zeros(n);
    let mut k4 = DVector::zeros(n);
    let mut stage = DVector::zeros(n);
    let mut trace = Vec::new();
    let mut t = 0.0;
    let mut steps = 0usize;
    let stride = opts.trace_stride;
    if stride.is_some() {
        trace.push((0.0, x.clone()));
    }
    let horizon = opts.stop == StopRule::Horizon;
    loop {
        rhs.eval(&x, &mut k1)?;
        let residual = k1.amax();
        let converged = residual <= opts.tol;
        let at_end = if horizon { t >= opts.t_max } else { converged || t >= opts.t_max };
        let out_of_budget = opts.max_steps.is_some_and(|cap| steps >= cap);
        if at_end || out_of_budget {
            if let Some(k) = stride {
                if !steps.is_multiple_of(k) {
                    trace.push((t, x.clone()));
                }
            }
            return Ok(ConsensusRun { state: x, converged, elapsed: t, residual, steps, dt, trace });
        }
        let h = if horizon { dt.min(opts.t_max - t) } else { dt };
        match opts.scheme {
            Scheme::Euler => x.axpy(h, &k1, 1.0),
            Scheme::Rk4 => {
                stage.copy_from(&x);
                stage.axpy(0.5 * h, &k1, 1.0);
                rhs.eval(&stage, &mut k2)?;
                stage.copy_from(&x);
                stage.axpy(0.5 * h, &k2, 1.0);
                rhs.eval(&stage, &mut k3)?;
                stage.copy_from(&x);
                stage.axpy(h, &k3, 1.0);
                rhs.eval(&stage, &mut k4)?;
                k2 += &k3;
                k1.axpy(2.0, &k2, 1.0);
                k1 += &k4;
                x.axpy(h / 6.0, &k1, 1.0);
            }
        }
        steps += 1;
        t = if horizon && h < dt { opts.t_max } else { t + h };
        if !x.iter().all(|v| v.is_finite() && v.abs() < OVERFLOW_GUARD) {
            return Err(ConsensusError::Unstable { time: t });
        }
        if let Some(k) = stride {
            if steps.is_multiple_of(k) {
                trace.push((t, x.clone()));
            }
        }
    }
}

/// `x' = -M x + b` for a dense `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFlowProblem {
    pub matrix: Matrix,
    pub forcing: DVector<f64>,
    pub x0: DVector<f64>,
    pub options: ConsensusOptions,
}

struct DenseAffine<'a> {
    m: &'a Matrix,
    b: &'a DVector<f64>,
}

impl Rhs for DenseAffine<'_> {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn eval(&mut self, x: &DVector<f64>, out: &mut DVector<f64>) -> Result<(), ConsensusError> {
        out.copy_from(self.b);
        out.gemv(-1.0, self.m, x, 1.0);
        Ok(())
    }
}

/// Integrates a [`LinearFlowProblem`] with the step chosen from
/// `||M||_inf`.
pub fn integrate(problem: &LinearFlowProblem) -> Result<ConsensusRun, ConsensusError> {
    let n = problem.forcing.len();
    if problem.matrix.nrows() != n || problem.matrix.ncols() != n || problem.x0.len() != n {
        return Err(ConsensusError::Dimension(format!(
            "matrix {}x{}, forcing {}, x0 {}",
            problem.matrix.nrows(),
            problem.matrix.ncols(),
            n,
            problem.x0.len()
        )));
    }
    let dt = problem.options.resolve_dt(inf_norm(&problem.matrix));
    let mut rhs = DenseAffine { m: &problem.matrix, b: &problem.forcing };
    solve(&mut rhs, problem.x0.clone(), dt, &problem.options)
}

/// A Laplacian diffusion operator `x -> -L x`, evaluated either as a dense
/// product or by a round of neighbor messages.
pub trait Diffusion: Send + Sync {
    fn dim(&self) -> usize;
    /// Writes `-L x` into `out`.
    fn apply(&self, x: &DVector<f64>, out: &mut DVector<f64>);
    /// Upper bound on the spectral radius of `L`.
    fn norm_bound(&self) -> f64;
}

/// Dense-matrix diffusion.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseDiffusion {
    laplacian: Matrix,
    bound: f64,
}

impl DenseDiffusion {
    pub fn new(laplacian: Matrix) -> Self {
        let bound = inf_norm(&laplacian);
        DenseDiffusion { laplacian, bound }
    }

    pub fn laplacian(&self) -> &Matrix {
        &self.laplacian
    }
}

impl Diffusion for DenseDiffusion {
    fn dim(&self) -> usize {
        self.laplacian.nrows()
    }

    fn apply(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.gemv(-1.0, &self.laplacian, x, 0.0);
    }

    fn norm_bound(&self) -> f64 {
        self.bound
    }
}

/// `x' = -L x + b` over any [`Diffusion`].
pub struct DiffusionRhs<'a> {
    pub diffusion: &'a dyn Diffusion,
    pub forcing: Option<&'a DVector<f64>>,
}

impl Rhs for DiffusionRhs<'_> {
    fn dim(&self) -> usize {
        self.diffusion.dim()
    }

    fn eval(&mut self, x: &DVector<f64>, out: &mut DVector<f64>) -> Result<(), ConsensusError> {
        self.diffusion.apply(x, out);
        if let Some(b) = self.forcing {
            *out += b;
        }
        Ok(())
    }
}

/// Runs `x' = -L x + b` from `x0`.
pub fn run_diffusion(
    diffusion: &dyn Diffusion,
    forcing: Option<&DVector<f64>>,
    x0: DVector<f64>,
    opts: &ConsensusOptions,
) -> Result<ConsensusRun, ConsensusError> {
    if let Some(b) = forcing {
        if b.len() != diffusion.dim() {
            return Err(ConsensusError::Dimension(format!("forcing has {} entries, system has {}", b.len(), diffusion.dim())));
        }
    }
    let dt = opts.resolve_dt(diffusion.norm_bound());
    solve(&mut DiffusionRhs { diffusion, forcing }, x0, dt, opts)
}

/// Average consensus `x_i' = sum_{j in N_i} (x_j - x_i)` on `g`.
pub fn average_consensus(g: &Graph, x0: &[f64], opts: &ConsensusOptions) -> Result<ConsensusRun, ConsensusError> {
    if !g.is_connected() {
        return Err(ConsensusError::Disconnected);
    }
    if x0.len() != g.node_count() {
        return Err(ConsensusError::Dimension(format!("{} initial values for {} nodes", x0.len(), g.node_count())));
    }
    let diffusion = DenseDiffusion::new(unweighted_laplacian(g));
    run_diffusion(&diffusion, None, DVector::from_column_slice(x0), opts)
}

/// Result of a ratio consensus: every node's local estimate of
/// `-sum u0 / sum v0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioOutcome {
    pub per_node: DVector<f64>,
    pub numerator: ConsensusRun,
    pub denominator: ConsensusRun,
}

impl RatioOutcome {
    /// Network-wide value (mean of node estimates).
    pub fn value(&self) -> f64 {
        self.per_node.mean()
    }

    /// Largest disagreement between node estimates.
    pub fn spread(&self) -> f64 {
        self.per_node.max() - self.per_node.min()
    }

    pub fn converged(&self) -> bool {
        self.numerator.converged && self.denominator.converged
    }
}

const DENOMINATOR_FLOOR: f64 = 1e-12;

/// Runs two average consensuses and returns `-u_i* / v_i*` at each node.
pub fn ratio_consensus_with(
    diffusion: &dyn Diffusion,
    u0: &[f64],
    v0: &[f64],
    opts: &ConsensusOptions,
) -> Result<RatioOutcome, ConsensusError> {
    let n = diffusion.dim();
    if u0.len() != n || v0.len() != n {
        return Err(ConsensusError::Dimension(format!("{} / {} initial values for {n} nodes", u0.len(), v0.len())));
    }
    let numerator = run_diffusion(diffusion, None, DVector::from_column_slice(u0), opts)?;
    let denominator = run_diffusion(diffusion, None, DVector::from_column_slice(v0), opts)?;
    ratio_from_runs(numerator, denominator)
}

pub(crate) fn ratio_from_runs(numerator: ConsensusRun, denominator: ConsensusRun) -> Result<RatioOutcome, ConsensusError> {
    // once settled, a denominator smaller than the node disagreement has
    // no reliable sign
    let spread = if denominator.converged { denominator.state.max() - denominator.state.min() } else { 0.0 };
    let degenerate = |v: f64| v.abs() < DENOMINATOR_FLOOR || v.abs() <= spread;
    if let Some((node, &value)) = denominator.state.iter().enumerate().find(|(_, v)| degenerate(**v)) {
        return Err(ConsensusError::DegenerateDenominator { node, value });
    }
    let per_node = numerator.state.zip_map(&denominator.state, |u, v| -u / v);
    Ok(RatioOutcome { per_node, numerator, denominator })
}

/// [`ratio_consensus_with`] over the unit-weight Laplacian of `g`.
pub fn ratio_consensus(g: &Graph, u0: &[f64], v0: &[f64], opts: &ConsensusOptions) -> Result<RatioOutcome, ConsensusError> {
    if !g.is_connected() {
        return Err(ConsensusError::Disconnected);
    }
    ratio_consensus_with(&DenseDiffusion::new(unweighted_laplacian(g)), u0, v0, opts)
}
