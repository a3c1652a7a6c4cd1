//! Prompt templates and their rendering.

use std::collections::BTreeMap;
use std::str::FromStr;

use fxchain_core::metrics::AfVector;
use fxchain_core::{FxRegistry, Regime};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("missing placeholder{}: {}", if .0.len() == 1 { "" } else { "s" }, .0.join(", "))]
    MissingPlaceholders(Vec<String>),
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    /// Conversation synthesis grounded in a chain.
    InstructionFollowing,
    /// Reasoning synthesis for an existing conversation.
    ChainOfThought,
    /// Judge rubric for tool alignment and thought quality.
    JudgeDataset,
    /// Judge rubric for instruction following and reasoning quality.
    JudgeNlg,
    /// Chain estimation from dry and reference descriptors.
    Estimate,
}

impl Template {
    pub const ALL: [Template; 5] = [
        Template::InstructionFollowing,
        Template::ChainOfThought,
        Template::JudgeDataset,
        Template::JudgeNlg,
        Template::Estimate,
    ];

    pub fn text(self) -> &'static str {
        match self {
            Template::InstructionFollowing => {
                include_str!("../templates/instruction_following.txt")
            }
            Template::ChainOfThought => include_str!("../templates/chain_of_thought.txt"),
            Template::JudgeDataset => include_str!("../templates/judge_dataset.txt"),
            Template::JudgeNlg => include_str!("../templates/judge_nlg.txt"),
            Template::Estimate => include_str!("../templates/estimate.txt"),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Template::InstructionFollowing => "instruction_following",
            Template::ChainOfThought => "chain_of_thought",
            Template::JudgeDataset => "judge_dataset",
            Template::JudgeNlg => "judge_nlg",
            Template::Estimate => "estimate",
        }
    }

    /// Placeholder names in first-appearance order.
    pub fn placeholders(self) -> Vec<String> {
        let mut names = Vec::new();
        for token in tokenize(self.text()) {
            if let Token::Placeholder(name) = token {
                if !names.iter().any(|n| n == name) {
                    names.push(name.to_string());
                }
            }
        }
        names
    }
}

impl FromStr for Template {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Template::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| PromptError::UnknownTemplate(s.to_string()))
    }
}

enum Token<'a> {
    Text(&'a str),
    Placeholder(&'a str),
}

/// Splits template text into literal runs and `{name}` placeholders.
/// `{{` and `}}` are escaped braces; any other brace is literal.
fn tokenize(text: &str) -> Vec<Token<'_>> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let (mut i, mut start) = (0, 0);
    while i < bytes.len() {
        let two = &bytes[i..(i + 2).min(bytes.len())];
        if two == b"{{" || two == b"}}" {
            tokens.push(Token::Text(&text[start..i + 1]));
            i += 2;
            start = i;
            continue;
        }
        if bytes[i] == b'{' {
            let name_len = bytes[i + 1..]
                .iter()
                .take_while(|b| b.is_ascii_alphanumeric() || **b == b'_')
                .count();
            let end = i + 1 + name_len;
            if name_len > 0 && bytes.get(end) == Some(&b'}') {
                tokens.push(Token::Text(&text[start..i]));
                tokens.push(Token::Placeholder(&text[i + 1..end]));
                i = end + 1;
                start = i;
                continue;
            }
        }
        i += 1;
    }
    tokens.push(Token::Text(&text[start..]));
    tokens
}

/// Substitutes every placeholder; fails naming all absent fields.
pub fn render_template(
    template: Template,
    fields: &BTreeMap<String, String>,
) -> Result<String, PromptError> {
    let missing: Vec<String> = template
        .placeholders()
        .into_iter()
        .filter(|p| !fields.contains_key(p))
        .collect();
    if !missing.is_empty() {
        return Err(PromptError::MissingPlaceholders(missing));
    }
    Ok(tokenize(template.text())
        .into_iter()
        .map(|t| match t {
            Token::Text(s) => s,
            Token::Placeholder(name) => fields[name].as_str(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub tool_schema_json: String,
}

/// Function-calling schema of the registry for one regime.
pub fn tool_schema(registry: &FxRegistry, regime: Regime) -> Value {
    let tools: Vec<Value> = registry
        .modules
        .iter()
        .map(|m| {
            let properties: serde_json::Map<String, Value> = m
                .params
                .iter()
                .map(|p| {
                    let r = p.range(regime);
                    (
                        p.name.clone(),
                        json!({"type": "number", "unit": p.unit, "minimum": r.min, "maximum": r.max, "step": r.step}),
                    )
                })
                .collect();
            let required: Vec<&str> = m.params.iter().map(|p| p.name.as_str()).collect();
            json!({
                "type": "function",
                "function": {
                    "name": m.name,
                    "parameters": {"type": "object", "properties": properties, "required": required},
                },
            })
        })
        .collect();
    Value::Array(tools)
}

pub fn tool_schema_json(registry: &FxRegistry, regime: Regime) -> String {
    serde_json::to_string_pretty(&tool_schema(registry, regime)).expect("schema serializes")
}

/// One of the data-generation or judge templates as a system prompt.
pub fn render_prompt(
    template: Template,
    fields: &BTreeMap<String, String>,
    registry: &FxRegistry,
    regime: Regime,
) -> Result<PromptBundle, PromptError> {
    Ok(PromptBundle {
        system_text: render_template(template, fields)?,
        user_text: String::new(),
        tool_schema_json: tool_schema_json(registry, regime),
    })
}

pub fn describe_features(af: &AfVector) -> String {
    let bark: Vec<String> = af.bark_spectrum.iter().map(|v| format!("{v:.1}")).collect();
    format!(
        "rms_dbfs: {:.2}\ncrest_factor_db: {:.2}\nstereo_width: {:.4}\nstereo_imbalance: {:.4}\nbark_band_energy_db (24 bands, low to high): [{}]",
        af.rms,
        af.crest_factor_db,
        af.stereo_width,
        af.stereo_imbalance,
        bark.join(", ")
    )
}

/// Estimation request: instructions and tools as the system message, the
/// measured descriptors of both recordings as the user message.
pub fn estimation_bundle(
    dry: &AfVector,
    reference: &AfVector,
    registry: &FxRegistry,
    regime: Regime,
) -> PromptBundle {
    let schema = tool_schema_json(registry, regime);
    let fields: BTreeMap<String, String> = [
        ("tool_schema", schema.clone()),
        ("dry_features", describe_features(dry)),
        ("reference_features", describe_features(reference)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let full = render_template(Template::Estimate, &fields).expect("all estimate fields supplied");
    let (system_text, user_text) = full
        .split_once("\nDry features:")
        .map(|(sys, user)| (sys.trim_end().to_string(), format!("Dry features:{user}")))
        .expect("estimate template has a features section");
    PromptBundle {
        system_text,
        user_text,
        tool_schema_json: schema,
    }
}
