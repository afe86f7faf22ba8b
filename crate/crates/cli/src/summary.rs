use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

/// One pass/fail assertion of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: Option<f64>,
    pub limit: Option<f64>,
    pub detail: Option<String>,
}

impl Check {
    /// `value <= limit`.
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= limit,
            value: Some(value),
            limit: Some(limit),
            detail: None,
        }
    }

    /// `value >= limit`.
    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            passed: value >= limit,
            value: Some(value),
            limit: Some(limit),
            detail: None,
        }
    }

    pub fn flag(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            value: None,
            limit: None,
            detail: Some(detail.into()),
        }
    }
}

/// Machine-readable record of one subcommand run, written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub command: String,
    pub seed: u64,
    pub passed: bool,
    pub error: Option<String>,
    pub checks: Vec<Check>,
    pub metrics: BTreeMap<String, Value>,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
}

impl Summary {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.into(),
            seed,
            passed: true,
            error: None,
            checks: Vec::new(),
            metrics: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn check(&mut self, c: Check) {
        self.passed &= c.passed;
        self.checks.push(c);
    }

    pub fn metric(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.metrics.insert(key.into(), v);
    }

    pub fn fail(&mut self, err: &anyhow::Error) {
        self.passed = false;
        self.error = Some(format!("{err:#}"));
    }

    pub fn write(&self, dir: &Path) -> degheat::Result<()> {
        degheat::io::write_json(&dir.join("summary.json"), self)
    }
}
