//! Tool-call text codec.
//!
//! Model output carries one `<tool_call>` block per effect, each holding a
//! JSON object `{"name": ..., "arguments": {...}}`. An optional leading
//! `<think>` block holds the reasoning trace and whatever follows the last
//! block is the user-facing response.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::chain::{validate_chain, FxCall, FxChain, Issue, IssueKind, Policy};
use crate::registry::FxRegistry;

pub const OPEN_TAG: &str = "<tool_call>";
pub const CLOSE_TAG: &str = "</tool_call>";
pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("input is not valid utf-8 (byte {offset})")]
    InvalidUtf8 { offset: usize },
    #[error("tool-call block {index} opened at byte {offset} is never closed")]
    UnterminatedBlock { index: usize, offset: usize },
    #[error("tool-call block {index}: malformed json at byte {offset}: {message}")]
    MalformedJson {
        index: usize,
        offset: usize,
        message: String,
    },
    #[error("tool-call block {index} (byte {offset}): {reason}")]
    BadBlock {
        index: usize,
        offset: usize,
        reason: String,
    },
    #[error("tool calls failed validation:\n{}", render_issues(.0))]
    Invalid(Vec<Issue>),
}

fn render_issues(issues: &[Issue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("\n")
}

/// A parsed model reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallDocument {
    pub raw_text: String,
    /// Calls as they appeared in the text, before range repairs.
    pub calls: Vec<FxCall>,
    /// The validated chain (with clamp repairs applied, if any).
    pub chain: FxChain,
    pub trailing_response: String,
    pub cot: Option<String>,
    /// Warnings collected while parsing and validating.
    pub issues: Vec<Issue>,
}

pub fn parse_toolcalls_bytes(
    bytes: &[u8],
    registry: &FxRegistry,
    policy: Policy,
) -> Result<ToolCallDocument, CodecError> {
    let text = std::str::from_utf8(bytes).map_err(|e| CodecError::InvalidUtf8 {
        offset: e.valid_up_to(),
    })?;
    parse_toolcalls(text, registry, policy)
}

pub fn parse_toolcalls(
    text: &str,
    registry: &FxRegistry,
    policy: Policy,
) -> Result<ToolCallDocument, CodecError> {
    let (cot, body_start) = leading_think(text);
    let mut calls = Vec::new();
    let mut issues = Vec::new();
    let mut pos = body_start;
    let mut last_end = None;

    while let Some(rel) = text[pos..].find(OPEN_TAG) {
        let index = calls.len();
        let open = pos + rel;
        let inner_start = open + OPEN_TAG.len();
        let Some(close_rel) = text[inner_start..].find(CLOSE_TAG) else {
            return Err(CodecError::UnterminatedBlock {
                index,
                offset: open,
            });
        };
        let inner_end = inner_start + close_rel;
        let call = parse_block(
            &text[inner_start..inner_end],
            index,
            inner_start,
            policy,
            &mut issues,
        )?;
        calls.push(call);
        pos = inner_end + CLOSE_TAG.len();
        last_end = Some(pos);
    }

    let trailing_response = match (last_end, cot.is_some()) {
        (Some(end), _) => text[end..].trim().to_string(),
        (None, true) => text[body_start..].trim().to_string(),
        (None, false) => text.to_string(),
    };

    let report = validate_chain(&FxChain::new(calls.clone()), registry, policy);
    issues.extend(report.issues);
    if issues.iter().any(Issue::is_error) {
        return Err(CodecError::Invalid(issues));
    }
    Ok(ToolCallDocument {
        raw_text: text.to_string(),
        calls,
        chain: report.chain,
        trailing_response,
        cot,
        issues,
    })
}

fn leading_think(text: &str) -> (Option<String>, usize) {
    let trimmed = text.trim_start();
    let lead = text.len() - trimmed.len();
    if let Some(rest) = trimmed.strip_prefix(THINK_OPEN) {
        if let Some(close) = rest.find(THINK_CLOSE) {
            let cot = rest[..close].trim().to_string();
            return (
                Some(cot),
                lead + THINK_OPEN.len() + close + THINK_CLOSE.len(),
            );
        }
    }
    (None, 0)
}

fn parse_block(
    body: &str,
    index: usize,
    offset: usize,
    policy: Policy,
    issues: &mut Vec<Issue>,
) -> Result<FxCall, CodecError> {
    let (value, repaired) = match serde_json::from_str::<Value>(body) {
        Ok(v) => (v, false),
        Err(first) => {
            // single quotes (and the backtick-open typesetting of them) are a
            // common formatting drift; retry with double quotes
            let swapped: String = body
                .chars()
                .map(|c| if c == '\'' || c == '`' { '"' } else { c })
                .collect();
            match serde_json::from_str::<Value>(&swapped) {
                Ok(v) => (v, true),
                Err(_) => {
                    return Err(CodecError::MalformedJson {
                        index,
                        offset: offset + json_error_offset(body, &first),
                        message: first.to_string(),
                    })
                }
            }
        }
    };
    let bad = |reason: &str| CodecError::BadBlock {
        index,
        offset,
        reason: reason.to_string(),
    };
    let Value::Object(obj) = value else {
        return Err(bad("block body is not a json object"));
    };
    let name = match obj.get("name") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(bad("`name` is not a string")),
        None => return Err(bad("missing `name`")),
    };
    if repaired {
        issues.push(Issue::warning(index, &name, None, IssueKind::QuoteRepair));
    }
    let mut call = FxCall::new(&name, Vec::<(String, f64)>::new());
    match obj.get("arguments") {
        None | Some(Value::Null) => {}
        Some(Value::Object(args)) => {
            for (key, v) in args {
                match v.as_f64() {
                    Some(x) => {
                        call.arguments.insert(key.clone(), x);
                    }
                    None => {
                        let kind = IssueKind::NonNumeric {
                            found: v.to_string(),
                        };
                        issues.push(match policy {
                            Policy::Strict => Issue::error(index, &name, Some(key), kind),
                            Policy::Clamp => Issue::warning(index, &name, Some(key), kind),
                        });
                    }
                }
            }
        }
        Some(_) => return Err(bad("`arguments` is not a json object")),
    }
    Ok(call)
}

/// Converts serde_json's 1-based line/column into a byte offset into `body`.
fn json_error_offset(body: &str, err: &serde_json::Error) -> usize {
    let line_start: usize = body
        .split_inclusive('\n')
        .take(err.line().saturating_sub(1))
        .map(str::len)
        .sum();
    (line_start + err.column().saturating_sub(1)).min(body.len())
}

/// Shortest decimal that parses back to the same `f64`. Registry grid points
/// are short decimals, so they print with at most a handful of digits.
pub fn format_number(v: f64) -> String {
    format!("{v:?}")
}

/// Renders a strict-valid chain as tool-call blocks, one per call, with
/// arguments in schema order.
pub fn emit_toolcalls(chain: &FxChain, registry: &FxRegistry) -> Result<String, CodecError> {
    let report = validate_chain(chain, registry, Policy::Strict);
    if !report.is_valid() {
        return Err(CodecError::Invalid(report.issues));
    }
    let blocks: Vec<String> = chain
        .calls
        .iter()
        .map(|call| {
            let schema = registry.module(&call.tool).expect("validated");
            let args: Vec<String> = schema
                .params
                .iter()
                .map(|p| {
                    format!(
                        "{}: {}",
                        Value::String(p.name.clone()),
                        format_number(call.arguments[&p.name])
                    )
                })
                .collect();
            format!(
                "{OPEN_TAG}\n{{\"name\": {}, \"arguments\": {{{}}}}}\n{CLOSE_TAG}",
                Value::String(call.tool.clone()),
                args.join(", ")
            )
        })
        .collect();
    Ok(blocks.join("\n"))
}
