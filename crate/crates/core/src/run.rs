//! Runs one algorithm on a scenario and packages the outcome as a report.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::flow::{coordinate_flow, kkt_residuals, FlowResult};
use crate::generation::{coordinate_generation, stationarity_residual, GenerationResult};
use crate::joint::{
    coordinate_joint_recursive, coordinate_joint_twoscale, joint_kkt_residuals, JointResult, JointStatus,
};
use crate::oracle::{solve_flow_centralized, solve_generation_centralized, solve_joint_centralized};
use crate::report::{flow_entries, Convergence, Costs, RunReport, TraceLog};
use crate::scenario::Scenario;
use crate::{check_len, CoordError, ExecMode, RunStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Gen,
    Flow,
    JointRecursive,
    JointTwoscale,
    OracleDecoupled,
    OracleJoint,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Gen,
        Algorithm::Flow,
        Algorithm::JointRecursive,
        Algorithm::JointTwoscale,
        Algorithm::OracleDecoupled,
        Algorithm::OracleJoint,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Gen => "gen",
            Algorithm::Flow => "flow",
            Algorithm::JointRecursive => "joint-recursive",
            Algorithm::JointTwoscale => "joint-twoscale",
            Algorithm::OracleDecoupled => "oracle-decoupled",
            Algorithm::OracleJoint => "oracle-joint",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Algorithm::ALL.iter().map(|a| a.as_str()).collect();
                format!("unknown algorithm `{s}` (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRequest {
    pub algorithm: Algorithm,
    pub mode: ExecMode,
    /// Generation input for the flow algorithm; overrides the scenario's
    /// inline values.
    pub p_g: Option<Vec<f64>>,
    pub trace: bool,
}

impl RunRequest {
    pub fn new(algorithm: Algorithm, mode: ExecMode) -> Self {
        RunRequest { algorithm, mode, p_g: None, trace: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: RunReport,
    pub trace: Option<TraceLog>,
}

fn base_report(scenario: &Scenario, req: &RunRequest, p_g: Vec<f64>) -> RunReport {
    RunReport {
        scenario: scenario.spec.name.clone(),
        algorithm: req.algorithm.as_str().into(),
        mode: req.mode.as_str().into(),
        node_ids: scenario.labels.clone(),
        lambda: None,
        lambda_v: None,
        lambda_e: None,
        p_d: scenario.p_d.clone(),
        costs: Costs::evaluate(&scenario.network, &p_g, None),
        p_g,
        flows: Vec::new(),
        kkt: BTreeMap::new(),
        convergence: Convergence {
            converged: true,
            status: "converged".into(),
            iterations: 0,
            elapsed: 0.0,
            residual: 0.0,
            inner_runs: None,
            history: None,
        },
        wall_clock_ms: None,
    }
}

fn convergence_from(stats: &RunStats, horizon_ok: bool) -> Convergence {
    let status = if stats.converged {
        "converged"
    } else if horizon_ok {
        "horizon"
    } else {
        "not-converged"
    };
    Convergence {
        converged: stats.converged,
        status: status.into(),
        iterations: stats.steps,
        elapsed: stats.elapsed,
        residual: stats.residual,
        inner_runs: None,
        history: None,
    }
}

fn add_generation(report: &mut RunReport, scenario: &Scenario, g: &GenerationResult) {
    report.lambda = Some(g.lambda);
    report.kkt.insert(
        "balance".into(),
        (g.p_g.iter().sum::<f64>() - scenario.p_d.iter().sum::<f64>()).abs(),
    );
    report.kkt.insert("generation_stationarity".into(), stationarity_residual(&scenario.network, &g.p_g, g.lambda));
}

fn add_flow(report: &mut RunReport, scenario: &Scenario, p_g: &[f64], f: &FlowResult) {
    let net = &scenario.network;
    let kkt = kkt_residuals(net, &f.lambda_v, &f.lambda_e, &f.flows, p_g, &scenario.p_d);
    report.kkt.insert("flow_stationarity".into(), kkt.stationarity);
    report.kkt.insert("node_balance".into(), kkt.node_balance);
    report.kkt.insert("antisymmetry".into(), kkt.antisymmetry);
    report.lambda_v = Some(f.lambda_v.clone());
    report.lambda_e = Some(f.lambda_e.clone());
    report.flows = flow_entries(&net.graph, &f.flows);
    report.costs = Costs::evaluate(net, p_g, Some(&f.flows));
}

fn joint_report(scenario: &Scenario, req: &RunRequest, j: &JointResult) -> RunReport {
    let net = &scenario.network;
    let mut report = base_report(scenario, req, j.p_g.clone());
    let kkt = joint_kkt_residuals(net, j, &scenario.p_d);
    report.kkt = BTreeMap::from([
        ("balance".to_string(), kkt.global_balance),
        ("flow_stationarity".to_string(), kkt.flow_stationarity),
        ("node_balance".to_string(), kkt.node_balance),
        ("antisymmetry".to_string(), kkt.antisymmetry),
        ("generation_stationarity".to_string(), kkt.generation_stationarity),
    ]);
    report.lambda = Some(j.lambda);
    report.lambda_v = Some(j.lambda_v.clone());
    report.lambda_e = Some(j.lambda_e.clone());
    report.flows = flow_entries(&net.graph, &j.flows);
    report.costs = Costs::evaluate(net, &j.p_g, Some(&j.flows));
    let status = match j.status {
        JointStatus::Converged => "converged",
        JointStatus::Horizon => "horizon",
        JointStatus::MaxIterations => "max-iterations",
        JointStatus::Diverged => "diverged",
    };
    report.convergence = Convergence {
        converged: j.converged(),
        status: status.into(),
        iterations: j.iterations,
        elapsed: j.elapsed,
        residual: j.residual,
        inner_runs: Some(j.inner_runs),
        history: (!j.history.is_empty()).then(|| j.history.clone()),
    };
    report
}

/// Generation used as the input of a flow run.
fn flow_input(scenario: &Scenario, req: &RunRequest) -> Result<Vec<f64>, CoordError> {
    if let Some(p) = req.p_g.as_ref().or(scenario.p_g.as_ref()) {
        check_len("p_g", p.len(), scenario.network.node_count())?;
        return Ok(p.clone());
    }
    let opts = scenario.spec.solver.generation_options(req.mode, false);
    Ok(coordinate_generation(&scenario.network, &scenario.p_d, &opts)?.p_g)
}

/// Executes `req` on `scenario`. Reports are deterministic.
pub fn run(scenario: &Scenario, req: &RunRequest) -> Result<RunOutput, CoordError> {
    let solver = &scenario.spec.solver;
    let net = &scenario.network;
    let p_d = &scenario.p_d;
    let mut trace = req.trace.then(TraceLog::default);
    let report = match req.algorithm {
        Algorithm::Gen => {
            let g = coordinate_generation(net, p_d, &solver.generation_options(req.mode, req.trace))?;
            let mut report = base_report(scenario, req, g.p_g.clone());
            add_generation(&mut report, scenario, &g);
            let slowest = if g.u_stats.elapsed >= g.v_stats.elapsed { g.u_stats } else { g.v_stats };
            report.convergence = convergence_from(&slowest, false);
            if let Some(log) = trace.as_mut() {
                for name in ["u", "v"] {
                    let samples: Vec<_> =
                        g.trace.iter().filter(|(_, v, _)| v == name).map(|(t, _, x)| (*t, x.clone())).collect();
                    log.push_nodes(name, &samples);
                }
            }
            report
        }
        Algorithm::Flow => {
            let p_g = flow_input(scenario, req)?;
            let f = coordinate_flow(net, &p_g, p_d, &solver.flow_options(req.mode, req.trace))?;
            let mut report = base_report(scenario, req, p_g.clone());
            add_flow(&mut report, scenario, &p_g, &f);
            report.convergence = convergence_from(&f.stats, solver.horizon.is_some());
            if let Some(log) = trace.as_mut() {
                log.push_nodes("lambda_v", &f.trace);
            }
            report
        }
        Algorithm::JointRecursive => {
            let j = coordinate_joint_recursive(net, p_d, &solver.recursive_options(req.mode))?;
            if let Some(log) = trace.as_mut() {
                let samples: Vec<_> = j
                    .history
                    .iter()
                    .enumerate()
                    .map(|(k, p)| (k as f64, nalgebra::DVector::from_column_slice(p)))
                    .collect();
                log.push_nodes("p_g", &samples);
            }
            joint_report(scenario, req, &j)
        }
        Algorithm::JointTwoscale => {
            let j = coordinate_joint_twoscale(net, p_d, &solver.twoscale_options(req.mode, req.trace))?;
            if let Some(log) = trace.as_mut() {
                log.push_nodes("lambda_v", &j.trace);
            }
            joint_report(scenario, req, &j)
        }
        Algorithm::OracleDecoupled => {
            let g = solve_generation_centralized(net, p_d)?;
            let f = solve_flow_centralized(net, &g.p_g, p_d, solver.balance_tol)?;
            let mut report = base_report(scenario, req, g.p_g.clone());
            add_generation(&mut report, scenario, &g);
            add_flow(&mut report, scenario, &g.p_g, &f);
            report
        }
        Algorithm::OracleJoint => joint_report(scenario, req, &solve_joint_centralized(net, p_d)?),
    };
    Ok(RunOutput { report, trace })
}
