//! Seeded synthesis of (pseudo-dry, reference, chain) triplets.
//!
//! Each record draws from its own RNG stream (seed plus record index), so
//! records can be rendered in parallel without changing what gets sampled.

use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{linear_to_db, read_wav, write_wav, AudioBuffer, AudioError, WavFormat};
use crate::chain::{FxCall, FxChain};
use crate::dsp::{render_chain, DspError};
use crate::registry::{FxRegistry, Regime};

pub const MAX_CHAIN_LENGTH: usize = 9;
pub const DEFAULT_TARGET_RMS_DBFS: f64 = -20.0;
/// Inputs quieter than this are treated as silence.
pub const SILENCE_FLOOR_DBFS: f64 = -80.0;
/// Peak ceiling used when RMS normalization would clip.
pub const PEAK_CEILING_DBFS: f64 = -0.1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("chain length {0} outside 1..={MAX_CHAIN_LENGTH}")]
    BadLength(usize),
    #[error("pairs_per_length must be at least 1")]
    NoPairs,
    #[error("no dry sources given")]
    NoSources,
    #[error("input is silent (rms {rms_dbfs:.1} dBFS)")]
    Silent { rms_dbfs: f64 },
    #[error("output directory {0} is not empty")]
    OutputNotEmpty(PathBuf),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("record {id}: {source}")]
    Render {
        id: String,
        #[source]
        source: DspError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
}

/// Draws a chain of `length` distinct effects: a uniform subset of modules,
/// then a uniform ordering of it, then one uniform grid point per parameter
/// (calls in chain order, parameters in schema order).
pub fn sample_chain<R: Rng + ?Sized>(
    rng: &mut R,
    length: usize,
    regime: Regime,
    registry: &FxRegistry,
) -> Result<FxChain, CorpusError> {
    let pool = registry.modules.len();
    if length == 0 || length > MAX_CHAIN_LENGTH.min(pool) {
        return Err(CorpusError::BadLength(length));
    }
    let mut subset = index::sample(rng, pool, length).into_vec();
    subset.sort_unstable();
    subset.shuffle(rng);
    let calls = subset
        .into_iter()
        .map(|m| {
            let module = &registry.modules[m];
            let args: Vec<(String, f64)> = module
                .params
                .iter()
                .map(|p| {
                    let r = p.range(regime);
                    (p.name.clone(), r.grid_point(rng.gen_range(0..r.grid_len())))
                })
                .collect();
            FxCall::new(&module.name, args)
        })
        .collect();
    Ok(FxChain::new(calls))
}

/// RNG for record `index` of a run seeded with `seed`.
pub fn record_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoudnessReport {
    pub input_rms_dbfs: f64,
    pub gain_db: f64,
    /// True when the RMS target would have clipped and the gain was reduced
    /// to peak-normalize instead.
    pub peak_limited: bool,
}

/// Uniform gain that brings the pooled two-channel RMS to `target_rms_dbfs`,
/// backed off to a -0.1 dBFS peak when the target would clip.
pub fn loudness_normalize(
    audio: &AudioBuffer,
    target_rms_dbfs: f64,
) -> Result<(AudioBuffer, LoudnessReport), CorpusError> {
    let rms = audio.rms();
    let rms_db = if rms > 0.0 {
        linear_to_db(rms)
    } else {
        f64::NEG_INFINITY
    };
    if !(rms_db > SILENCE_FLOOR_DBFS) {
        return Err(CorpusError::Silent { rms_dbfs: rms_db });
    }
    let mut gain_db = target_rms_dbfs - rms_db;
    let peak_db = linear_to_db(audio.peak());
    let peak_limited = peak_db + gain_db > 0.0;
    if peak_limited {
        gain_db = PEAK_CEILING_DBFS - peak_db;
        info!("loudness target would clip; peak-normalizing with {gain_db:.2} dB instead");
    }
    let g = 10f64.powf(gain_db / 20.0);
    Ok((
        audio.map(|x| g * x),
        LoudnessReport {
            input_rms_dbfs: rms_db,
            gain_db,
            peak_limited,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub seed: u64,
    pub regime: Regime,
    pub lengths: Vec<usize>,
    pub pairs_per_length: usize,
    pub target_rms_dbfs: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            regime: Regime::Coarse,
            lengths: (1..=MAX_CHAIN_LENGTH).collect(),
            pairs_per_length: 10,
            target_rms_dbfs: DEFAULT_TARGET_RMS_DBFS,
        }
    }
}

impl SamplingConfig {
    pub fn check(&self) -> Result<(), CorpusError> {
        if let Some(&bad) = self
            .lengths
            .iter()
            .find(|&&l| l == 0 || l > MAX_CHAIN_LENGTH)
        {
            return Err(CorpusError::BadLength(bad));
        }
        if self.pairs_per_length == 0 {
            return Err(CorpusError::NoPairs);
        }
        Ok(())
    }

    pub fn record_count(&self) -> usize {
        self.lengths.len() * self.pairs_per_length
    }
}

/// Parses `1..9`, `1..=9`, `3` or `1,2,5`.
pub fn parse_lengths(text: &str) -> Result<Vec<usize>, String> {
    let t = text.trim();
    let num = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| format!("bad chain length `{s}`"))
    };
    if let Some((a, b)) = t.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let (lo, hi) = (num(a)?, num(b)?);
        if lo > hi {
            return Err(format!("empty length range `{t}`"));
        }
        return Ok((lo..=hi).collect());
    }
    t.split(',').map(num).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub id: String,
    /// Relative to the manifest directory.
    pub dry_path: PathBuf,
    pub ref_path: PathBuf,
    pub chain: FxChain,
    pub regime: Regime,
    pub source_tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub config: SamplingConfig,
    pub registry_fingerprint: String,
    pub records: Vec<PairRecord>,
}

impl CorpusManifest {
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| CorpusError::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Record id: chain length and index within that length.
pub fn record_id(length: usize, k: usize) -> String {
    format!("len{length}_{k:04}")
}

struct Source {
    pseudo_dry: AudioBuffer,
    tag: String,
}

fn load_source(path: &Path, target_rms_dbfs: f64) -> Result<Source, CorpusError> {
    let audio = read_wav(path)?;
    let (normalized, report) =
        loudness_normalize(&audio, target_rms_dbfs).map_err(|e| match e {
            CorpusError::Silent { rms_dbfs } => CorpusError::Manifest {
                path: path.to_path_buf(),
                message: format!("source is silent ({rms_dbfs:.1} dBFS)"),
            },
            other => other,
        })?;
    if report.peak_limited {
        warn!(
            "{}: peak-limited during loudness normalization",
            path.display()
        );
    }
    let tag = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Source {
        // stored as 32-bit float, so render from exactly what gets stored
        pseudo_dry: normalized.to_f32_precision(),
        tag,
    })
}

/// Builds a stratified corpus under `out_dir`: `dry/<id>.wav`,
/// `ref/<id>.wav` and `manifest.json`. Sources are assigned round-robin.
/// On failure everything written so far is removed.
pub fn build_corpus(
    config: &SamplingConfig,
    dry_sources: &[PathBuf],
    out_dir: &Path,
    registry: &FxRegistry,
) -> Result<CorpusManifest, CorpusError> {
    config.check()?;
    if dry_sources.is_empty() {
        return Err(CorpusError::NoSources);
    }
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CorpusError::Io { path, source }
    };
    if out_dir.exists() {
        let mut entries = std::fs::read_dir(out_dir).map_err(io(out_dir))?;
        if entries.next().is_some() {
            return Err(CorpusError::OutputNotEmpty(out_dir.to_path_buf()));
        }
    }
    let sources = dry_sources
        .iter()
        .map(|p| load_source(p, config.target_rms_dbfs))
        .collect::<Result<Vec<_>, _>>()?;

    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let result = write_corpus(config, &sources, out_dir, registry);
    if result.is_err() {
        for sub in ["dry", "ref"] {
            let _ = std::fs::remove_dir_all(out_dir.join(sub));
        }
        let _ = std::fs::remove_file(out_dir.join(MANIFEST_FILE));
    }
    result
}

fn write_corpus(
    config: &SamplingConfig,
    sources: &[Source],
    out_dir: &Path,
    registry: &FxRegistry,
) -> Result<CorpusManifest, CorpusError> {
    for sub in ["dry", "ref"] {
        let dir = out_dir.join(sub);
        std::fs::create_dir_all(&dir).map_err(|source| CorpusError::Io { path: dir, source })?;
    }
    let slots: Vec<(usize, usize)> = config
        .lengths
        .iter()
        .flat_map(|&l| (0..config.pairs_per_length).map(move |k| (l, k)))
        .collect();

    let records = slots
        .par_iter()
        .enumerate()
        .map(|(i, &(length, k))| {
            let id = record_id(length, k);
            let source = &sources[i % sources.len()];
            let mut rng = record_rng(config.seed, i as u64);
            let chain = sample_chain(&mut rng, length, config.regime, registry)?;
            let (reference, _) =
                render_chain(&chain, &source.pseudo_dry, registry).map_err(|source| {
                    CorpusError::Render {
                        id: id.clone(),
                        source,
                    }
                })?;
            if reference.peak() == 0.0 {
                // rendering keeps the input length, so a delay longer than the
                // source with a fully wet mix leaves nothing
                warn!("{id}: reference is silent; use sources longer than the longest delay");
            }
            let dry_path = PathBuf::from("dry").join(format!("{id}.wav"));
            let ref_path = PathBuf::from("ref").join(format!("{id}.wav"));
            write_wav(
                &out_dir.join(&dry_path),
                &source.pseudo_dry,
                WavFormat::Float32,
            )?;
            write_wav(&out_dir.join(&ref_path), &reference, WavFormat::Float32)?;
            Ok(PairRecord {
                id,
                dry_path,
                ref_path,
                chain,
                regime: config.regime,
                source_tags: vec![source.tag.clone()],
            })
        })
        .collect::<Result<Vec<_>, CorpusError>>()?;

    let manifest = CorpusManifest {
        config: config.clone(),
        registry_fingerprint: registry.fingerprint(),
        records,
    };
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Resolves a record's audio paths against the manifest directory and loads
/// both files.
pub fn load_pair(
    record: &PairRecord,
    manifest_dir: &Path,
) -> Result<(AudioBuffer, AudioBuffer), CorpusError> {
    let dry = read_wav(&manifest_dir.join(&record.dry_path))?;
    let reference = read_wav(&manifest_dir.join(&record.ref_path))?;
    Ok((dry, reference))
}
