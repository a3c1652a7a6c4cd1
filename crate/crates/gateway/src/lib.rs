//! Lets a chat-completion endpoint act as a chain estimator: prompt
//! rendering, the HTTP client, session transcripts with offline replay,
//! and the non-neural baselines.

pub mod baseline;
pub mod client;
pub mod estimate;
pub mod mock;
pub mod prompts;
pub mod transcript;

pub use baseline::{baseline_predict, random_fx_monte_carlo, BaselineKind, RandomFxStats};
pub use client::{query_estimator, EndpointConfig, GatewayError, QueryResult};
pub use estimate::{
    estimate_manifest, estimate_record, write_estimates, EstimateOptions, EstimateOutcome,
    ResponseSource,
};
pub use prompts::{
    estimation_bundle, render_prompt, render_template, PromptBundle, PromptError, Template,
};
pub use transcript::{Replay, TranscriptEntry, TranscriptError, TranscriptWriter};
