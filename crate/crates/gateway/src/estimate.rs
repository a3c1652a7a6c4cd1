//! Chain estimation over a corpus manifest, live or from a transcript.

use std::path::{Path, PathBuf};

use fxchain_core::corpus::{load_pair, CorpusManifest, PairRecord};
use fxchain_core::metrics::{af_features, evaluate_rendered, render_prediction, EvalReport};
use fxchain_core::{parse_toolcalls, FxChain, FxRegistry, Issue, Policy, Regime};
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::client::{query_estimator, request_body, EndpointConfig};
use crate::prompts::estimation_bundle;
use crate::transcript::{Replay, TranscriptEntry, TranscriptWriter};

/// Where assistant text comes from.
pub enum ResponseSource<'a> {
    Live {
        config: &'a EndpointConfig,
        transcript: Option<&'a TranscriptWriter>,
    },
    Replay(&'a Replay),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub policy: Policy,
    /// Ranges advertised to the estimator.
    pub regime: Regime,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            policy: Policy::Clamp,
            regime: Regime::Coarse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOutcome {
    pub id: String,
    pub raw_text: Option<String>,
    pub chain: Option<FxChain>,
    /// Warnings from parsing (clamps, quote repair, dropped arguments).
    pub issues: Vec<Issue>,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
    pub attempts: u32,
}

impl EstimateOutcome {
    fn failed(id: &str, raw_text: Option<String>, attempts: u32, error: String) -> Self {
        Self {
            id: id.to_string(),
            raw_text,
            chain: None,
            issues: Vec::new(),
            report: None,
            error: Some(error),
            attempts,
        }
    }
}

/// Queries (or replays) one record, parses the reply into a chain, renders
/// it on the pseudo-dry input and evaluates it against the record.
pub fn estimate_record(
    record: &PairRecord,
    manifest_dir: &Path,
    registry: &FxRegistry,
    source: &ResponseSource<'_>,
    options: EstimateOptions,
) -> EstimateOutcome {
    let (dry, reference) = match load_pair(record, manifest_dir) {
        Ok(p) => p,
        Err(e) => return EstimateOutcome::failed(&record.id, None, 0, e.to_string()),
    };
    let (dry_af, ref_af) = match (af_features(&dry), af_features(&reference)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => {
            return EstimateOutcome::failed(&record.id, None, 0, e.to_string())
        }
    };
    let bundle = estimation_bundle(&dry_af, &ref_af, registry, options.regime);

    let (text, attempts) = match source {
        ResponseSource::Live { config, transcript } => {
            let body = request_body(config, &bundle);
            let mut entry = TranscriptEntry::now(&record.id, &config.endpoint_url(), body);
            let result = query_estimator(config, &bundle);
            match &result {
                Ok(r) => {
                    entry.response = Some(r.text.clone());
                    entry.attempts = r.attempts;
                }
                Err(e) => {
                    entry.error = Some(e.to_string());
                    entry.attempts = e.attempts();
                }
            }
            if let Some(t) = transcript {
                if let Err(e) = t.write(&entry) {
                    warn!("{e}");
                }
            }
            match result {
                Ok(r) => (r.text, r.attempts),
                Err(e) => {
                    return EstimateOutcome::failed(&record.id, None, e.attempts(), e.to_string())
                }
            }
        }
        ResponseSource::Replay(replay) => match replay.get(&record.id) {
            Ok(entry) => match (&entry.response, &entry.error) {
                (Some(text), _) => (text.clone(), entry.attempts),
                (None, err) => {
                    let msg = err
                        .clone()
                        .unwrap_or_else(|| "recorded request has no response".into());
                    return EstimateOutcome::failed(&record.id, None, entry.attempts, msg);
                }
            },
            Err(e) => return EstimateOutcome::failed(&record.id, None, 0, e.to_string()),
        },
    };

    let doc = match parse_toolcalls(&text, registry, options.policy) {
        Ok(d) => d,
        Err(e) => {
            return EstimateOutcome::failed(
                &record.id,
                Some(text),
                attempts,
                format!("unusable reply: {e}"),
            )
        }
    };
    let evaluation =
        render_prediction(&doc.chain, &dry, registry, &record.id).and_then(|rendered| {
            evaluate_rendered(
                &doc.chain,
                &record.chain,
                &rendered,
                &reference,
                registry,
                None,
            )
        });
    let (report, error) = match evaluation {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    EstimateOutcome {
        id: record.id.clone(),
        raw_text: Some(text),
        chain: Some(doc.chain),
        issues: doc.issues,
        report,
        error,
        attempts,
    }
}

/// All records of a manifest, in manifest order.
pub fn estimate_manifest(
    manifest: &CorpusManifest,
    manifest_dir: &Path,
    registry: &FxRegistry,
    source: &ResponseSource<'_>,
    options: EstimateOptions,
) -> Vec<EstimateOutcome> {
    manifest
        .records
        .par_iter()
        .map(|r| estimate_record(r, manifest_dir, registry, source, options))
        .collect()
}

/// Writes `<id>.json` (chain) and `<id>.txt` (raw reply) per record plus
/// `estimates.json` with every outcome.
pub fn write_estimates(outcomes: &[EstimateOutcome], out_dir: &Path) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    for o in outcomes {
        if let Some(chain) = &o.chain {
            std::fs::write(
                out_dir.join(format!("{}.json", o.id)),
                chain.to_json() + "\n",
            )?;
        }
        if let Some(text) = &o.raw_text {
            std::fs::write(out_dir.join(format!("{}.txt", o.id)), text)?;
        }
    }
    let summary = out_dir.join("estimates.json");
    std::fs::write(
        &summary,
        serde_json::to_string_pretty(outcomes).expect("outcomes serialize") + "\n",
    )?;
    Ok(summary)
}
