//! Evaluation of predicted chains against ground truth, at the chain level
//! and on rendered audio.

mod features;
mod planning;
mod spectral;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use features::{
    af_distance, af_features, bark_spectrum, cosine_sim, hz_to_bark, ntl_was, welch_power,
    AfVector, BARK_BANDS, STEREO_WEIGHT, WELCH_SIZE,
};
pub use planning::{
    average_ranks, effect_accuracy, module_ranks, order_spearman, param_mae, pearson,
};
pub use spectral::{
    hann, mrs_detail, mrs_distance, stft_magnitude, ChannelMode, MrsDetail, ResolutionTerms,
    MAG_FLOOR, MRS_RESOLUTIONS,
};

use crate::audio::AudioBuffer;
use crate::chain::FxChain;
use crate::corpus::{load_pair, CorpusError, CorpusManifest, PairRecord};
use crate::dsp::{render_chain, DspError};
use crate::registry::FxRegistry;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("length mismatch: reference {reference} samples, estimate {estimate}")]
    LengthMismatch { reference: usize, estimate: usize },
    #[error("sample rate mismatch: reference {reference} Hz, estimate {estimate} Hz")]
    RateMismatch { reference: u32, estimate: u32 },
    #[error("reference audio is all zero")]
    SilentReference,
    #[error("audio is silent")]
    Silent,
    #[error("vector dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("zero-norm vector")]
    ZeroNorm,
    #[error("number token loss: {0}")]
    Ntl(String),
    #[error("rendering prediction for {id}: {source}")]
    Render {
        id: String,
        #[source]
        source: DspError,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("embedding `{name}`: {source}")]
    Embedding {
        name: String,
        #[source]
        source: Box<MetricError>,
    },
}

/// Embedding vectors for the reference and the rendered prediction, as
/// produced by some external audio encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingPair {
    pub reference: Vec<f64>,
    pub prediction: Vec<f64>,
}

/// Encoder name to embeddings, for one record.
pub type RecordEmbeddings = BTreeMap<String, EmbeddingPair>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub effect_accuracy: f64,
    /// `None` when undefined (a constant rank vector).
    pub order_correlation: Option<f64>,
    /// `None` when the chains share no module.
    pub param_mae: Option<f64>,
    pub mrs_lr: f64,
    pub mrs_ms: f64,
    pub af_distance: f64,
    pub cosine_sims: BTreeMap<String, f64>,
}

/// Renders a prediction on the pseudo-dry input at the precision the
/// corpus stores references in.
pub fn render_prediction(
    pred: &FxChain,
    dry: &AudioBuffer,
    registry: &FxRegistry,
    id: &str,
) -> Result<AudioBuffer, MetricError> {
    let (out, _) = render_chain(pred, dry, registry).map_err(|source| MetricError::Render {
        id: id.to_string(),
        source,
    })?;
    Ok(out.to_f32_precision())
}

/// All metrics for an already rendered prediction.
pub fn evaluate_rendered(
    pred: &FxChain,
    gt: &FxChain,
    rendered: &AudioBuffer,
    reference: &AudioBuffer,
    registry: &FxRegistry,
    embeddings: Option<&RecordEmbeddings>,
) -> Result<EvalReport, MetricError> {
    let mut cosine_sims = BTreeMap::new();
    for (name, pair) in embeddings.into_iter().flatten() {
        let sim =
            cosine_sim(&pair.reference, &pair.prediction).map_err(|e| MetricError::Embedding {
                name: name.clone(),
                source: Box::new(e),
            })?;
        cosine_sims.insert(name.clone(), sim);
    }
    Ok(EvalReport {
        effect_accuracy: effect_accuracy(pred, gt, registry),
        order_correlation: order_spearman(pred, gt, registry),
        param_mae: param_mae(pred, gt, registry),
        mrs_lr: mrs_distance(reference, rendered, ChannelMode::Lr)?,
        mrs_ms: mrs_distance(reference, rendered, ChannelMode::Ms)?,
        af_distance: af_distance(&af_features(reference)?, &af_features(rendered)?),
        cosine_sims,
    })
}

/// Renders `pred` on the dry input and scores it against the ground truth
/// chain and reference audio.
pub fn evaluate_audio(
    pred: &FxChain,
    gt: &FxChain,
    dry: &AudioBuffer,
    reference: &AudioBuffer,
    registry: &FxRegistry,
    embeddings: Option<&RecordEmbeddings>,
) -> Result<EvalReport, MetricError> {
    let rendered = render_prediction(pred, dry, registry, "prediction")?;
    evaluate_rendered(pred, gt, &rendered, reference, registry, embeddings)
}

/// Loads a corpus record's audio (paths relative to `manifest_dir`) and
/// evaluates `pred` against it.
pub fn evaluate_pair(
    pred: &FxChain,
    record: &PairRecord,
    manifest_dir: &Path,
    registry: &FxRegistry,
    embeddings: Option<&RecordEmbeddings>,
) -> Result<EvalReport, MetricError> {
    let (dry, reference) = load_pair(record, manifest_dir)?;
    let rendered = render_prediction(pred, &dry, registry, &record.id)?;
    evaluate_rendered(
        pred,
        &record.chain,
        &rendered,
        &reference,
        registry,
        embeddings,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordOutcome {
    pub id: String,
    pub length: usize,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
}

/// Per-record evaluation over a manifest. `predictions[i]` belongs to
/// `manifest.records[i]`; an `Err` marks a prediction that could not be
/// loaded and the record as failed.
pub fn evaluate_batch(
    manifest: &CorpusManifest,
    manifest_dir: &Path,
    predictions: &[Result<FxChain, String>],
    registry: &FxRegistry,
    embeddings: Option<&BTreeMap<String, RecordEmbeddings>>,
) -> Vec<RecordOutcome> {
    assert_eq!(
        predictions.len(),
        manifest.records.len(),
        "one prediction per record"
    );
    manifest
        .records
        .par_iter()
        .zip(predictions)
        .map(|(record, pred)| {
            let result = pred.as_ref().map_err(Clone::clone).and_then(|chain| {
                let emb = embeddings.and_then(|e| e.get(&record.id));
                evaluate_pair(chain, record, manifest_dir, registry, emb).map_err(|e| e.to_string())
            });
            let (report, error) = match result {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e)),
            };
            RecordOutcome {
                id: record.id.clone(),
                length: record.chain.len(),
                report,
                error,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub records: usize,
    pub evaluated: usize,
    pub failed: usize,
    pub effect_accuracy: Option<f64>,
    pub order_correlation: Option<f64>,
    /// Records whose correlation was undefined and left out of the mean.
    pub undefined_correlations: usize,
    pub param_mae: Option<f64>,
    /// Records with no common module, left out of the MAE mean.
    pub absent_param_mae: usize,
    pub mrs_lr: Option<f64>,
    pub mrs_ms: Option<f64>,
    pub af_distance: Option<f64>,
    pub cosine_sims: BTreeMap<String, f64>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn aggregate(outcomes: &[RecordOutcome]) -> Aggregate {
    let reports: Vec<&EvalReport> = outcomes.iter().filter_map(|o| o.report.as_ref()).collect();
    let names: BTreeSet<&String> = reports.iter().flat_map(|r| r.cosine_sims.keys()).collect();
    Aggregate {
        records: outcomes.len(),
        evaluated: reports.len(),
        failed: outcomes.len() - reports.len(),
        effect_accuracy: mean(reports.iter().map(|r| r.effect_accuracy)),
        order_correlation: mean(reports.iter().filter_map(|r| r.order_correlation)),
        undefined_correlations: reports
            .iter()
            .filter(|r| r.order_correlation.is_none())
            .count(),
        param_mae: mean(reports.iter().filter_map(|r| r.param_mae)),
        absent_param_mae: reports.iter().filter(|r| r.param_mae.is_none()).count(),
        mrs_lr: mean(reports.iter().map(|r| r.mrs_lr)),
        mrs_ms: mean(reports.iter().map(|r| r.mrs_ms)),
        af_distance: mean(reports.iter().map(|r| r.af_distance)),
        cosine_sims: names
            .into_iter()
            .filter_map(|n| {
                mean(reports.iter().filter_map(|r| r.cosine_sims.get(n).copied()))
                    .map(|m| (n.clone(), m))
            })
            .collect(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

/// One CSV row per record; absent values are empty cells.
pub fn write_outcomes_csv<W: std::io::Write>(
    outcomes: &[RecordOutcome],
    out: W,
) -> Result<(), csv::Error> {
    let names: BTreeSet<&String> = outcomes
        .iter()
        .filter_map(|o| o.report.as_ref())
        .flat_map(|r| r.cosine_sims.keys())
        .collect();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = [
        "id",
        "length",
        "status",
        "effect_accuracy",
        "order_correlation",
        "param_mae",
        "mrs_lr",
        "mrs_ms",
        "af_distance",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(names.iter().map(|n| format!("cos_{n}")));
    header.push("error".into());
    w.write_record(&header)?;
    for o in outcomes {
        let mut row = vec![o.id.clone(), o.length.to_string()];
        match &o.report {
            Some(r) => {
                row.push("ok".into());
                row.push(opt(Some(r.effect_accuracy)));
                row.push(opt(r.order_correlation));
                row.push(opt(r.param_mae));
                row.push(opt(Some(r.mrs_lr)));
                row.push(opt(Some(r.mrs_ms)));
                row.push(opt(Some(r.af_distance)));
                row.extend(names.iter().map(|n| opt(r.cosine_sims.get(*n).copied())));
            }
            None => {
                row.push("failed".into());
                row.extend(std::iter::repeat(String::new()).take(6 + names.len()));
            }
        }
        row.push(o.error.clone().unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
