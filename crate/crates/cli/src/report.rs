//! Machine-readable run reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Violation,
}

/// A residual compared against a bound. Checks without a bound are
/// informational and always pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: Option<f64>,
    pub pass: bool,
}

impl Check {
    pub fn bounded(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound: Some(bound),
            pass: value <= bound,
        }
    }

    pub fn info(name: impl Into<String>, value: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound: None,
            pass: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportEntry {
    pub s: f64,
    pub t: f64,
    /// `H(t, s)`, row-major.
    pub matrix: Vec<Vec<f64>>,
    /// `H(t, s) v` for each requested vector `v`.
    pub images: Vec<Vec<f64>>,
    /// `‖H − H_fine‖∞` against a re-integration at a tenth of the step.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub oracle_discrepancy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolonomyEntry {
    pub reversed: bool,
    pub matrix: Vec<Vec<f64>>,
    pub defect_norm: f64,
    pub orthonormal_matrix: Vec<Vec<f64>>,
    pub angle: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRow {
    pub s: f64,
    /// Columns are the special-frame basis vectors in the original frame.
    pub frame: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTable {
    pub s0: f64,
    pub rows: Vec<FrameRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeRow {
    pub s: f64,
    pub vector: usize,
    /// `Dσ(s)` from the coefficient form.
    pub explicit: Vec<f64>,
    /// The one-sided transport difference quotient.
    pub limit: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub arguments: BTreeMap<String, serde_json::Value>,
    pub scenario: Scenario,
    pub fingerprint: String,
    pub status: Status,
    pub checks: Vec<Check>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transports: Vec<TransportEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holonomy: Option<HolonomyEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<FrameTable>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub derivatives: Vec<DerivativeRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_seconds: Option<f64>,
}

impl RunReport {
    pub fn new(command: &str, arguments: BTreeMap<String, serde_json::Value>, scenario: &Scenario) -> Self {
        let fingerprint = fingerprint(command, &arguments, scenario);
        Self {
            tool: "ltransport".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            arguments,
            scenario: scenario.clone(),
            fingerprint,
            status: Status::Ok,
            checks: Vec::new(),
            transports: Vec::new(),
            holonomy: None,
            frame: None,
            derivatives: Vec::new(),
            wall_time_seconds: None,
        }
    }

    pub fn push(&mut self, check: Check) {
        if !check.pass {
            self.status = Status::Violation;
        }
        self.checks.push(check);
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    /// Every matrix in the report with a descriptive label.
    pub fn matrices(&self) -> Vec<(String, &Vec<Vec<f64>>)> {
        let mut out = Vec::new();
        for e in &self.transports {
            out.push((format!("H(t={}, s={})", e.t, e.s), &e.matrix));
        }
        if let Some(h) = &self.holonomy {
            out.push(("holonomy".to_string(), &h.matrix));
            out.push(("holonomy (orthonormal frame)".to_string(), &h.orthonormal_matrix));
        }
        if let Some(f) = &self.frame {
            for r in &f.rows {
                out.push((format!("special frame at s={}", r.s), &r.frame));
            }
        }
        out
    }

    /// `i,j,value` rows, one block per matrix, each preceded by a `#` label.
    pub fn to_tabular(&self) -> String {
        let mut text = String::new();
        for (label, m) in self.matrices() {
            text.push_str(&format!("# {label}\n"));
            text.push_str(&csv_table(m));
        }
        text
    }
}

/// A matrix as comma-separated `i,j,value` rows under a header.
pub fn csv_table(m: &[Vec<f64>]) -> String {
    let mut text = String::from("i,j,value\n");
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            text.push_str(&format!("{i},{j},{v:?}\n"));
        }
    }
    text
}

/// SHA-256 over the command, its arguments, the effective scenario and the
/// tool version.
pub fn fingerprint(command: &str, arguments: &BTreeMap<String, serde_json::Value>, scenario: &Scenario) -> String {
    let payload = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "arguments": arguments,
        "scenario": scenario,
    });
    hex::encode(Sha256::digest(payload.to_string().as_bytes()))
}
