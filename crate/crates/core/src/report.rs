//! Run reports (JSON) and trajectory traces (CSV).

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{EnergyNetwork, FlowMap};
use crate::graph::Graph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowEntry {
    pub from: usize,
    pub to: usize,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Costs {
    pub generation: f64,
    pub flow: f64,
    pub total: f64,
}

impl Costs {
    pub fn evaluate(network: &EnergyNetwork, p_g: &[f64], flows: Option<&FlowMap>) -> Costs {
        let generation = network.generation_cost(p_g);
        let flow = flows.map_or(0.0, |f| network.flow_cost(f));
        Costs { generation, flow, total: generation + flow }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Convergence {
    pub converged: bool,
    pub status: String,
    /// Integration steps, or outer iterations for the recursive scheme.
    pub iterations: usize,
    /// Simulated time of the final (or only) integration.
    pub elapsed: f64,
    pub residual: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_runs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub scenario: String,
    pub algorithm: String,
    pub mode: String,
    /// External id of each node, in the order of every per-node vector.
    pub node_ids: Vec<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_v: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_e: Option<Vec<f64>>,
    pub p_d: Vec<f64>,
    pub p_g: Vec<f64>,
    /// Canonical orientation, 1-based positions, `from < to`.
    pub flows: Vec<FlowEntry>,
    pub costs: Costs,
    pub kkt: BTreeMap<String, f64>,
    pub convergence: Convergence,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_ms: Option<f64>,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot parse report: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("reports differ in shape: {0}")]
    ShapeMismatch(String),
}

pub fn flow_entries(g: &Graph, flows: &FlowMap) -> Vec<FlowEntry> {
    g.edges()
        .iter()
        .zip(flows.canonical())
        .map(|(e, &value)| FlowEntry { from: e.lo + 1, to: e.hi + 1, value })
        .collect()
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports hold only finite numbers");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<RunReport, ReportError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Canonical flow values in report order.
    pub fn flow_values(&self) -> Vec<f64> {
        self.flows.iter().map(|f| f.value).collect()
    }

    /// True when every number in the report is finite.
    pub fn is_finite(&self) -> bool {
        let all = |v: &[f64]| v.iter().all(|x| x.is_finite());
        self.lambda.is_none_or(f64::is_finite)
            && self.lambda_v.as_deref().is_none_or(all)
            && self.lambda_e.as_deref().is_none_or(all)
            && all(&self.p_g)
            && all(&self.flow_values())
            && all(&[self.costs.generation, self.costs.flow, self.costs.total])
            && self.kkt.values().all(|x| x.is_finite())
            && self.convergence.residual.is_finite()
    }
}

/// Largest absolute and relative difference of one report field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDiff {
    pub field: String,
    pub max_abs: f64,
    pub max_rel: f64,
}

impl FieldDiff {
    fn of(field: &str, a: &[f64], b: &[f64]) -> FieldDiff {
        let mut max_abs: f64 = 0.0;
        let mut max_rel: f64 = 0.0;
        for (x, y) in a.iter().zip(b) {
            let d = (x - y).abs();
            max_abs = max_abs.max(d);
            let scale = x.abs().max(y.abs());
            if d > 0.0 {
                max_rel = max_rel.max(d / scale);
            }
        }
        FieldDiff { field: field.to_string(), max_abs, max_rel }
    }

    /// Within tolerance in either the absolute or the relative sense.
    pub fn within(&self, tol: f64) -> bool {
        self.max_abs <= tol || self.max_rel <= tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub fields: Vec<FieldDiff>,
    pub tol: f64,
}

impl Comparison {
    pub fn within(&self) -> bool {
        self.fields.iter().all(|f| f.within(self.tol))
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for f in &self.fields {
            let verdict = if f.within(self.tol) { "ok" } else { "DIFF" };
            out.push_str(&format!("{:<16} abs {:<12.3e} rel {:<12.3e} {verdict}\n", f.field, f.max_abs, f.max_rel));
        }
        out
    }
}

/// Field-by-field comparison. Optional fields are compared only when both
/// reports carry them.
pub fn compare(a: &RunReport, b: &RunReport, tol: f64) -> Result<Comparison, ReportError> {
    if a.p_g.len() != b.p_g.len() {
        return Err(ReportError::ShapeMismatch(format!("{} vs {} nodes", a.p_g.len(), b.p_g.len())));
    }
    let edges = |r: &RunReport| r.flows.iter().map(|f| (f.from, f.to)).collect::<Vec<_>>();
    if !a.flows.is_empty() && !b.flows.is_empty() && edges(a) != edges(b) {
        return Err(ReportError::ShapeMismatch("different edge sets".into()));
    }
    let mut fields = vec![FieldDiff::of("p_g", &a.p_g, &b.p_g)];
    if !a.flows.is_empty() && !b.flows.is_empty() {
        fields.push(FieldDiff::of("flows", &a.flow_values(), &b.flow_values()));
    }
    if let (Some(x), Some(y)) = (a.lambda, b.lambda) {
        fields.push(FieldDiff::of("lambda", &[x], &[y]));
    }
    if let (Some(x), Some(y)) = (&a.lambda_v, &b.lambda_v) {
        fields.push(FieldDiff::of("lambda_v", x, y));
    }
    fields.push(FieldDiff::of("cost.generation", &[a.costs.generation], &[b.costs.generation]));
    fields.push(FieldDiff::of("cost.flow", &[a.costs.flow], &[b.costs.flow]));
    fields.push(FieldDiff::of("cost.total", &[a.costs.total], &[b.costs.total]));
    Ok(Comparison { fields, tol })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub variable: String,
    pub id: String,
    pub value: f64,
}

/// Sampled trajectories, one row per (time, variable, component).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceLog {
    pub rows: Vec<TraceRow>,
}

impl TraceLog {
    /// Adds a per-node trajectory; ids are 1-based positions.
    pub fn push_nodes(&mut self, variable: &str, samples: &[(f64, nalgebra::DVector<f64>)]) {
        for (t, x) in samples {
            for (i, v) in x.iter().enumerate() {
                self.rows.push(TraceRow { t: *t, variable: variable.into(), id: (i + 1).to_string(), value: *v });
            }
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        out.write_record(["t", "variable", "id", "value"])?;
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<TraceLog, csv::Error> {
        let mut rdr = csv::Reader::from_reader(r);
        let rows = rdr.deserialize().collect::<Result<Vec<TraceRow>, _>>()?;
        Ok(TraceLog { rows })
    }

    /// Time is nondecreasing within every (variable, id) series.
    pub fn is_time_ordered(&self) -> bool {
        let mut last: BTreeMap<(&str, &str), f64> = BTreeMap::new();
        self.rows.iter().all(|r| {
            let prev = last.insert((&r.variable, &r.id), r.t);
            prev.is_none_or(|p| p <= r.t)
        })
    }
}
