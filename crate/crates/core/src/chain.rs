//! Fx-chain data model and validation against the registry.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::{FxRegistry, Regime};

/// One effect invocation: a tool name and its numeric arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FxCall {
    pub tool: String,
    pub arguments: BTreeMap<String, f64>,
}

impl FxCall {
    pub fn new<I, K>(tool: &str, arguments: I) -> Self
    where
        I: IntoIterator<Item = (K, f64)>,
        K: Into<String>,
    {
        Self {
            tool: tool.to_string(),
            arguments: arguments.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    pub fn arg(&self, name: &str) -> Option<f64> {
        self.arguments.get(name).copied()
    }
}

/// An ordered list of effect calls, applied first to last.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FxChain {
    pub calls: Vec<FxCall>,
}

#[derive(Debug, Error)]
pub enum ChainFileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed chain json: {message}")]
    Json { path: String, message: String },
}

impl FxChain {
    pub fn new(calls: Vec<FxCall>) -> Self {
        Self { calls }
    }

    /// The explicit No-Fx chain.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.calls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.calls.is_empty()
    }

    pub fn tools(&self) -> impl Iterator<Item = &str> {
        self.calls.iter().map(|c| c.tool.as_str())
    }

    pub fn position(&self, tool: &str) -> Option<usize> {
        self.calls.iter().position(|c| c.tool == tool)
    }

    pub fn call(&self, tool: &str) -> Option<&FxCall> {
        self.calls.iter().find(|c| c.tool == tool)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("chain serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ChainFileError> {
        let text = std::fs::read_to_string(path).map_err(|source| ChainFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| ChainFileError::Json {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ChainFileError> {
        std::fs::write(path, self.to_json() + "\n").map_err(|source| ChainFileError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// Every problem is an error.
    #[default]
    Strict,
    /// Out-of-range values are pulled back into the coarse range with a
    /// warning; structural problems remain errors.
    Clamp,
}

impl std::str::FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "strict" => Ok(Policy::Strict),
            "clamp" => Ok(Policy::Clamp),
            other => Err(format!(
                "unknown policy `{other}` (expected strict or clamp)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IssueKind {
    UnknownTool,
    UnknownParam,
    MissingParam,
    DuplicateTool,
    NonFiniteValue,
    OutOfRange { value: f64, min: f64, max: f64 },
    Clamped { from: f64, to: f64 },
    NonNumeric { found: String },
    QuoteRepair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Issue {
    pub severity: Severity,
    pub call_index: Option<usize>,
    pub tool: Option<String>,
    pub param: Option<String>,
    #[serde(flatten)]
    pub kind: IssueKind,
}

impl Issue {
    pub fn error(call_index: usize, tool: &str, param: Option<&str>, kind: IssueKind) -> Self {
        Self {
            severity: Severity::Error,
            call_index: Some(call_index),
            tool: Some(tool.to_string()),
            param: param.map(str::to_string),
            kind,
        }
    }

    pub fn warning(call_index: usize, tool: &str, param: Option<&str>, kind: IssueKind) -> Self {
        Self {
            severity: Severity::Warning,
            ..Self::error(call_index, tool, param, kind)
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{sev}")?;
        if let Some(i) = self.call_index {
            write!(f, " [call {i}")?;
            if let Some(t) = &self.tool {
                write!(f, " {t}")?;
            }
            if let Some(p) = &self.param {
                write!(f, ".{p}")?;
            }
            write!(f, "]")?;
        }
        match &self.kind {
            IssueKind::UnknownTool => write!(f, ": unknown tool"),
            IssueKind::UnknownParam => write!(f, ": unknown parameter"),
            IssueKind::MissingParam => write!(f, ": missing parameter"),
            IssueKind::DuplicateTool => write!(f, ": tool already used earlier in the chain"),
            IssueKind::NonFiniteValue => write!(f, ": value is not finite"),
            IssueKind::OutOfRange { value, min, max } => {
                write!(f, ": {value} outside [{min}, {max}]")
            }
            IssueKind::Clamped { from, to } => write!(f, ": clamped {from} -> {to}"),
            IssueKind::NonNumeric { found } => write!(f, ": non-numeric value {found}"),
            IssueKind::QuoteRepair => write!(f, ": single-quoted json repaired"),
        }
    }
}

/// Outcome of validating a chain: every issue found plus the chain after
/// any clamp repairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
    pub chain: FxChain,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        !self.issues.iter().any(Issue::is_error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.is_error())
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| !i.is_error())
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

pub fn validate_chain(chain: &FxChain, registry: &FxRegistry, policy: Policy) -> ValidationReport {
    let mut issues = Vec::new();
    let mut repaired = chain.clone();
    let mut seen = HashSet::new();

    for (idx, call) in chain.calls.iter().enumerate() {
        let tool = call.tool.as_str();
        if !seen.insert(tool) {
            issues.push(Issue::error(idx, tool, None, IssueKind::DuplicateTool));
        }
        let Some(schema) = registry.module(tool) else {
            issues.push(Issue::error(idx, tool, None, IssueKind::UnknownTool));
            continue;
        };
        for name in call.arguments.keys() {
            if schema.param(name).is_none() {
                issues.push(Issue::error(idx, tool, Some(name), IssueKind::UnknownParam));
            }
        }
        for param in &schema.params {
            let Some(value) = call.arg(&param.name) else {
                issues.push(Issue::error(
                    idx,
                    tool,
                    Some(&param.name),
                    IssueKind::MissingParam,
                ));
                continue;
            };
            if !value.is_finite() {
                issues.push(Issue::error(
                    idx,
                    tool,
                    Some(&param.name),
                    IssueKind::NonFiniteValue,
                ));
                continue;
            }
            let r = &param.coarse;
            if r.contains(value) {
                continue;
            }
            match policy {
                Policy::Strict => issues.push(Issue::error(
                    idx,
                    tool,
                    Some(&param.name),
                    IssueKind::OutOfRange {
                        value,
                        min: r.min,
                        max: r.max,
                    },
                )),
                Policy::Clamp => {
                    let to = value.clamp(r.min, r.max);
                    repaired.calls[idx].arguments.insert(param.name.clone(), to);
                    issues.push(Issue::warning(
                        idx,
                        tool,
                        Some(&param.name),
                        IssueKind::Clamped { from: value, to },
                    ));
                }
            }
        }
    }
    ValidationReport {
        issues,
        chain: repaired,
    }
}

/// True when every value of a structurally valid chain lies on the given
/// regime grid.
pub fn on_grid(chain: &FxChain, registry: &FxRegistry, regime: Regime) -> bool {
    chain.calls.iter().all(|call| {
        registry.module(&call.tool).is_some_and(|m| {
            m.params.iter().all(|p| {
                call.arg(&p.name)
                    .is_some_and(|v| p.range(regime).is_on_grid(v))
            })
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::registry_default;

    fn reverb() -> FxCall {
        FxCall::new(
            "reverb",
            [
                ("room_size", 0.5),
                ("damping", 0.5),
                ("width", 0.5),
                ("mix_ratio", 0.3),
            ],
        )
    }

    #[test]
    fn in_range_gain_is_valid() {
        let reg = registry_default();
        let chain = FxChain::new(vec![FxCall::new("gain", [("gain_db", 0.0)])]);
        let report = validate_chain(&chain, &reg, Policy::Strict);
        assert!(report.is_valid());
        assert!(report.issues.is_empty());
    }

    #[test]
    fn clamp_repairs_drive() {
        let reg = registry_default();
        let chain = FxChain::new(vec![FxCall::new("distortion", [("drive_db", 25.0)])]);
        let report = validate_chain(&chain, &reg, Policy::Clamp);
        assert!(report.is_valid());
        assert_eq!(report.warnings().count(), 1);
        assert_eq!(report.chain.calls[0].arg("drive_db"), Some(20.0));

        let strict = validate_chain(&chain, &reg, Policy::Strict);
        assert!(!strict.is_valid());
        assert_eq!(strict.issues[0].param.as_deref(), Some("drive_db"));
    }

    #[test]
    fn duplicate_tool_is_error() {
        let reg = registry_default();
        let chain = FxChain::new(vec![reverb(), reverb()]);
        let report = validate_chain(&chain, &reg, Policy::Strict);
        assert!(!report.is_valid());
        assert_eq!(report.issues.len(), 1);
        assert_eq!(report.issues[0].kind, IssueKind::DuplicateTool);
        assert_eq!(report.issues[0].call_index, Some(1));
        // structural errors survive clamp mode
        assert!(!validate_chain(&chain, &reg, Policy::Clamp).is_valid());
    }

    #[test]
    fn structural_issues_listed_with_location() {
        let reg = registry_default();
        let chain = FxChain::new(vec![
            FxCall::new("gain", [("gain_db", 1.0), ("gain_lin", 1.0)]),
            FxCall::new("phaser", [("rate", 1.0)]),
            FxCall::new("panner", Vec::<(String, f64)>::new()),
        ]);
        let report = validate_chain(&chain, &reg, Policy::Clamp);
        let kinds: Vec<_> = report
            .issues
            .iter()
            .map(|i| (i.call_index.unwrap(), i.param.clone(), i.kind.clone()))
            .collect();
        assert_eq!(
            kinds,
            vec![
                (0, Some("gain_lin".to_string()), IssueKind::UnknownParam),
                (1, None, IssueKind::UnknownTool),
                (2, Some("pan".to_string()), IssueKind::MissingParam),
            ]
        );
    }

    #[test]
    fn chain_json_shape() {
        let chain = FxChain::new(vec![FxCall::new("panner", [("pan", -0.6)])]);
        let v: serde_json::Value = serde_json::from_str(&chain.to_json()).unwrap();
        assert_eq!(v["calls"][0]["tool"], "panner");
        assert_eq!(v["calls"][0]["arguments"]["pan"], -0.6);
        assert_eq!(FxChain::from_json(&chain.to_json()).unwrap(), chain);
    }
}
