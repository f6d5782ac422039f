use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    /// A known, documented mismatch (the published low-belief cap).
    ExpectedDocumented,
    /// Preconditions not met; nothing was checked.
    Skipped,
    /// The equilibrium did not exist at the realized beliefs.
    Infeasible,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::ExpectedDocumented => "expected-documented",
            Status::Skipped => "skipped",
            Status::Infeasible => "infeasible",
        }
    }
}

/// A concrete point at which a claim was observed to fail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub point: BTreeMap<String, f64>,
    pub description: String,
}

impl Counterexample {
    pub fn new<const N: usize>(description: impl Into<String>, point: [(&str, f64); N]) -> Self {
        Counterexample {
            point: point.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            description: description.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub claim: String,
    pub status: Status,
    pub measured: f64,
    pub predicted: f64,
    pub tolerance: f64,
    /// False for reports that inform an open question rather than gate.
    pub gate: bool,
    pub counterexamples: Vec<Counterexample>,
    pub details: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

impl OracleReport {
    pub fn new(claim: impl Into<String>, measured: f64, predicted: f64, tolerance: f64) -> Self {
        OracleReport {
            claim: claim.into(),
            status: Status::Pass,
            measured,
            predicted,
            tolerance,
            gate: true,
            counterexamples: Vec::new(),
            details: BTreeMap::new(),
            notes: Vec::new(),
        }
    }

    pub fn skipped(claim: impl Into<String>, reason: impl Into<String>) -> Self {
        let mut report = OracleReport::new(claim, f64::NAN, f64::NAN, 0.0);
        report.status = Status::Skipped;
        report.notes.push(reason.into());
        report
    }

    /// Mark failed; a failure always carries at least one counterexample.
    pub fn fail(&mut self, counterexample: Counterexample) {
        self.status = Status::Fail;
        self.counterexamples.push(counterexample);
    }

    pub fn detail(&mut self, key: impl Into<String>, value: f64) {
        self.details.insert(key.into(), value);
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    /// Gating failure: counts towards a nonzero exit.
    pub fn is_hard_failure(&self) -> bool {
        self.gate && self.status == Status::Fail
    }
}
