//! Chat-completion client with retry and backoff.

use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::prompts::PromptBundle;

const BODY_EXCERPT_CHARS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Base URL; requests go to `{base_url}/chat/completions`.
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key, if any.
    pub api_key_env_var: Option<String>,
    pub timeout_s: f64,
    pub max_retries: u32,
    /// First backoff delay; doubles after every failed attempt.
    pub initial_backoff_ms: u64,
}

impl EndpointConfig {
    pub fn new(base_url: &str, model_name: &str) -> Self {
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            model_name: model_name.to_string(),
            api_key_env_var: None,
            timeout_s: 60.0,
            max_retries: 3,
            initial_backoff_ms: 500,
        }
    }

    pub fn check(&self) -> Result<(), GatewayError> {
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(GatewayError::Config(format!(
                "timeout_s must be positive, got {}",
                self.timeout_s
            )));
        }
        if self.base_url.is_empty() {
            return Err(GatewayError::Config("base_url is empty".into()));
        }
        Ok(())
    }

    pub fn endpoint_url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid endpoint config: {0}")]
    Config(String),
    #[error("network error after {attempts} attempt(s): {message}")]
    Network { attempts: u32, message: String },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("endpoint returned HTTP {status} after {attempts} attempt(s): {body_excerpt}")]
    Status {
        status: u16,
        attempts: u32,
        body_excerpt: String,
    },
    #[error("unexpected response shape: {0}")]
    BadResponse(String),
}

impl GatewayError {
    pub fn attempts(&self) -> u32 {
        match self {
            GatewayError::Network { attempts, .. }
            | GatewayError::Timeout { attempts }
            | GatewayError::Status { attempts, .. } => *attempts,
            _ => 1,
        }
    }
}

/// Assistant text plus the number of HTTP attempts it took.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub text: String,
    pub attempts: u32,
}

/// Request body: model name and role-tagged messages. An empty user text
/// is left out.
pub fn request_body(config: &EndpointConfig, bundle: &PromptBundle) -> Value {
    let mut messages = vec![json!({"role": "system", "content": bundle.system_text})];
    if !bundle.user_text.is_empty() {
        messages.push(json!({"role": "user", "content": bundle.user_text}));
    }
    json!({"model": config.model_name, "messages": messages})
}

/// Pulls `choices[0].message.content` out of a chat-completion response.
pub fn extract_content(body: &str) -> Result<String, GatewayError> {
    let value: Value = serde_json::from_str(body)
        .map_err(|e| GatewayError::BadResponse(format!("not JSON: {e}")))?;
    value["choices"][0]["message"]["content"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| GatewayError::BadResponse("missing choices[0].message.content".into()))
}

fn excerpt(body: &str) -> String {
    let mut s: String = body.chars().take(BODY_EXCERPT_CHARS).collect();
    if body.chars().count() > BODY_EXCERPT_CHARS {
        s.push_str("...");
    }
    s
}

enum Attempt {
    Done(String),
    Retry(GatewayError),
    Fail(GatewayError),
}

fn is_transient_status(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

/// Sends the bundle and returns the assistant text. 5xx, 429, timeouts and
/// connection failures are retried with exponential backoff, up to
/// `max_retries` extra attempts.
pub fn query_estimator(
    config: &EndpointConfig,
    bundle: &PromptBundle,
) -> Result<QueryResult, GatewayError> {
    config.check()?;
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
        .http_status_as_error(false)
        .build()
        .into();
    let url = config.endpoint_url();
    let body = request_body(config, bundle);
    let key = config
        .api_key_env_var
        .as_ref()
        .and_then(|var| match std::env::var(var) {
            Ok(k) => Some(k),
            Err(_) => {
                warn!("environment variable {var} is not set; sending request without a key");
                None
            }
        });

    let mut backoff = Duration::from_millis(config.initial_backoff_ms);
    let mut attempts = 0;
    loop {
        attempts += 1;
        let outcome = send_once(&agent, &url, &body, key.as_deref(), attempts);
        match outcome {
            Attempt::Done(text) => return Ok(QueryResult { text, attempts }),
            Attempt::Fail(e) => return Err(e),
            Attempt::Retry(e) if attempts > config.max_retries => return Err(e),
            Attempt::Retry(e) => {
                debug!("attempt {attempts} failed ({e}); retrying in {backoff:?}");
                std::thread::sleep(backoff);
                backoff *= 2;
            }
        }
    }
}

fn send_once(
    agent: &ureq::Agent,
    url: &str,
    body: &Value,
    key: Option<&str>,
    attempts: u32,
) -> Attempt {
    let mut request = agent.post(url);
    if let Some(k) = key {
        request = request.header("Authorization", format!("Bearer {k}"));
    }
    match request.send_json(body) {
        Ok(mut response) => {
            let status = response.status().as_u16();
            let text = match response.body_mut().read_to_string() {
                Ok(t) => t,
                Err(e) => return classify(e, attempts),
            };
            if (200..300).contains(&status) {
                match extract_content(&text) {
                    Ok(content) => Attempt::Done(content),
                    Err(e) => Attempt::Fail(e),
                }
            } else {
                let err = GatewayError::Status {
                    status,
                    attempts,
                    body_excerpt: excerpt(&text),
                };
                if is_transient_status(status) {
                    Attempt::Retry(err)
                } else {
                    Attempt::Fail(err)
                }
            }
        }
        Err(e) => classify(e, attempts),
    }
}

fn classify(e: ureq::Error, attempts: u32) -> Attempt {
    match e {
        ureq::Error::Timeout(_) => Attempt::Retry(GatewayError::Timeout { attempts }),
        ureq::Error::Io(_)
        | ureq::Error::ConnectionFailed
        | ureq::Error::HostNotFound
        | ureq::Error::BodyStalled => Attempt::Retry(GatewayError::Network {
            attempts,
            message: e.to_string(),
        }),
        other => Attempt::Fail(GatewayError::Network {
            attempts,
            message: other.to_string(),
        }),
    }
}
