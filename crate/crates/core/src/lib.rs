//! Audio effects chain toolkit: the effect catalog and renderer, the
//! tool-call text codec, seeded corpus synthesis and the evaluation metrics
//! used to score estimated chains.

pub mod audio;
pub mod chain;
pub mod codec;
pub mod corpus;
pub mod dsp;
pub mod metrics;
pub mod registry;
pub mod signals;

pub use audio::{read_wav, write_wav, AudioBuffer, AudioError, WavFormat};
pub use chain::{
    validate_chain, FxCall, FxChain, Issue, IssueKind, Policy, Severity, ValidationReport,
};
pub use codec::{
    emit_toolcalls, parse_toolcalls, parse_toolcalls_bytes, CodecError, ToolCallDocument,
};
pub use corpus::{
    build_corpus, loudness_normalize, sample_chain, CorpusError, CorpusManifest, PairRecord,
    SamplingConfig,
};
pub use dsp::{render_chain, render_effect, DspError, RenderTrace};
pub use metrics::{evaluate_pair, ChannelMode, EvalReport, MetricError};
pub use registry::{registry_default, FxRegistry, ParamRange, ParamSchema, Regime, RegistryError};
