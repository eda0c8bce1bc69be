//! Machine-readable run reports.
//!
//! A report is deterministic given its inputs, seed and crate version, except
//! for the `timings` map, which [`Report::comparable_json`] leaves out.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::space::StructureReport;
use crate::transforms::DeformationRecord;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// One checked claim. `value` and `limit` are the compared numbers when the
/// check is numeric.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub value: Option<f64>,
    pub limit: Option<f64>,
    pub detail: String,
}

impl Assertion {
    /// Passes when `value <= limit`.
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64, detail: impl Into<String>) -> Self {
        Assertion {
            name: name.into(),
            passed: value <= limit,
            value: Some(value),
            limit: Some(limit),
            detail: detail.into(),
        }
    }

    /// Passes when `value` lies in `[lo, hi]`; `limit` records the half width
    /// and the detail names the interval.
    pub fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64, detail: impl Into<String>) -> Self {
        let detail = detail.into();
        Assertion {
            name: name.into(),
            passed: (lo..=hi).contains(&value),
            value: Some(value),
            limit: Some((hi - lo) / 2.0),
            detail: if detail.is_empty() {
                format!("in [{lo}, {hi}]")
            } else {
                format!("in [{lo}, {hi}]; {detail}")
            },
        }
    }

    pub fn holds(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Assertion {
            name: name.into(),
            passed,
            value: None,
            limit: None,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Labeled<T> {
    pub label: String,
    #[serde(flatten)]
    pub value: T,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Report {
    pub command: Vec<String>,
    pub version: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// SHA-256 of each input file, keyed by the path as given.
    pub inputs: BTreeMap<String, String>,
    pub structures: Vec<Labeled<StructureReport>>,
    pub deformations: Vec<Labeled<DeformationRecord>>,
    pub assertions: Vec<Assertion>,
    pub results: BTreeMap<String, Value>,
    /// Wall-clock seconds per step.
    pub timings: BTreeMap<String, f64>,
}

impl Report {
    pub fn new<S: AsRef<str>>(command: &[S], seed: u64) -> Self {
        Report {
            command: command.iter().map(|s| s.as_ref().to_string()).collect(),
            version: VERSION.to_string(),
            seed,
            ..Default::default()
        }
    }

    pub fn hash_input(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn assert(&mut self, a: Assertion) -> bool {
        let passed = a.passed;
        self.assertions.push(a);
        passed
    }

    pub fn structure(&mut self, label: impl Into<String>, s: StructureReport) {
        self.structures.push(Labeled { label: label.into(), value: s });
    }

    pub fn deformation(&mut self, label: impl Into<String>, d: DeformationRecord) {
        self.deformations.push(Labeled { label: label.into(), value: d });
    }

    pub fn result<T: Serialize>(&mut self, key: impl Into<String>, value: &T) {
        let v = serde_json::to_value(value).expect("serializable result");
        self.results.insert(key.into(), v);
    }

    pub fn time(&mut self, key: impl Into<String>, seconds: f64) {
        self.timings.insert(key.into(), seconds);
    }

    pub fn all_passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Assertion> {
        self.assertions.iter().filter(|a| !a.passed)
    }

    /// Appends everything from `other` except its header fields.
    pub fn merge(&mut self, other: Report) {
        self.inputs.extend(other.inputs);
        self.structures.extend(other.structures);
        self.deformations.extend(other.deformations);
        self.assertions.extend(other.assertions);
        self.results.extend(other.results);
        self.timings.extend(other.timings);
    }

    pub fn to_json(&self) -> String {
        crate::io::to_json(self)
    }

    /// The report without timings, for rerun comparisons.
    pub fn comparable_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("serializable report");
        if let Value::Object(m) = &mut v {
            m.remove("timings");
        }
        crate::io::to_json(&v)
    }

    /// Only the assertion list, serialized.
    pub fn assertions_json(&self) -> String {
        crate::io::to_json(&self.assertions)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
