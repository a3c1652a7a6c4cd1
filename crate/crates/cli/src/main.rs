//! `fxchain`: render, sample, parse, build corpora, evaluate and query
//! estimators from the command line.

mod commands;
mod plot;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fxchain_core::{Policy, Regime, WavFormat};
use fxchain_gateway::{BaselineKind, Template};

/// Seed used when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Parser)]
#[command(name = "fxchain", version, about = "Audio effects chain toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Registry JSON replacing the built-in parameter table.
    #[arg(long, global = true)]
    pub registry: Option<PathBuf>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: log::LevelFilter,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inspect or export the effect registry.
    #[command(subcommand)]
    Registry(RegistryCmd),
    /// Apply a chain file to a WAV file.
    Render {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = OutFormat::F32)]
        format: OutFormat,
    },
    /// Draw random chains.
    Sample {
        #[arg(long, default_value_t = 3)]
        length: usize,
        #[arg(long, default_value = "coarse")]
        regime: Regime,
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Print tool-call text instead of chain JSON.
        #[arg(long)]
        toolcalls: bool,
    },
    /// Parse tool-call text (file or `-` for stdin) into a chain.
    Parse {
        input: PathBuf,
        #[arg(long, default_value = "strict")]
        policy: Policy,
    },
    /// Print a chain file as tool-call text.
    Emit { chain: PathBuf },
    /// Build corpora and test signals.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Evaluate predictions.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Query a chat-completion endpoint or render prompts.
    #[command(subcommand)]
    Gateway(GatewayCmd),
    /// Baseline predictors.
    #[command(subcommand)]
    Baseline(BaselineCmd),
    /// Run quick invariant checks end to end.
    Selftest,
}

#[derive(Debug, Subcommand)]
pub enum RegistryCmd {
    /// Write the registry as JSON.
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the tool schema offered to estimators.
    Schema {
        #[arg(long, default_value = "coarse")]
        regime: Regime,
    },
    /// Print the registry fingerprint.
    Fingerprint,
}

#[derive(Debug, Subcommand)]
pub enum CorpusCmd {
    /// Sample chains and render (pseudo-dry, reference) pairs.
    Build {
        #[arg(long, default_value = "coarse")]
        regime: Regime,
        /// e.g. `1..9` or `1,3,5`.
        #[arg(long, default_value = "1..9")]
        lengths: String,
        #[arg(long = "per-length", default_value_t = 10)]
        per_length: usize,
        /// Directory of WAV files (sorted by name) or a single WAV.
        #[arg(long)]
        sources: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = fxchain_core::corpus::DEFAULT_TARGET_RMS_DBFS)]
        target_rms: f64,
    },
    /// Write the deterministic test signals as WAV files.
    Signals {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        duration: f64,
        #[arg(long, default_value_t = 44_100)]
        sample_rate: u32,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    /// Score `<pred-dir>/<id>.json` against every manifest record.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long = "pred-dir")]
        pred_dir: PathBuf,
        /// JSON: record id -> encoder -> {reference, prediction} vectors.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Output directory (default: the prediction directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write dry/reference/prediction spectrogram PNGs.
        #[arg(long)]
        plot: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum GatewayCmd {
    /// Ask an endpoint for a chain per record, then evaluate the answers.
    Estimate {
        #[arg(long)]
        manifest: PathBuf,
        /// Base URL, e.g. http://localhost:8000/v1. Not needed with --replay.
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long, default_value = "default")]
        model: String,
        #[arg(long)]
        out: PathBuf,
        /// Environment variable holding the API key.
        #[arg(long)]
        api_key_env: Option<String>,
        /// Transcript to append to (default: <out>/transcript.jsonl).
        #[arg(long)]
        transcript: Option<PathBuf>,
        /// Answer from a recorded transcript instead of the network.
        #[arg(long)]
        replay: Option<PathBuf>,
        #[arg(long, default_value = "clamp")]
        policy: Policy,
        #[arg(long, default_value = "coarse")]
        regime: Regime,
        #[arg(long, default_value_t = 60.0)]
        timeout: f64,
        #[arg(long, default_value_t = 3)]
        max_retries: u32,
    },
    /// Render a prompt template with `--field name=value` pairs.
    Prompt {
        #[arg(long)]
        template: Template,
        #[arg(long = "field", value_parser = parse_field)]
        fields: Vec<(String, String)>,
    },
}

#[derive(Debug, Subcommand)]
pub enum BaselineCmd {
    /// Write baseline predictions for every manifest record.
    Predict {
        #[arg(long)]
        kind: BaselineKind,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "coarse")]
        regime: Regime,
    },
    /// Random-Fx against random ground truth, with 95% intervals.
    MonteCarlo {
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        #[arg(long, default_value = "coarse")]
        regime: Regime,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OutFormat {
    F32,
    Pcm16,
    Pcm24,
}

impl From<OutFormat> for WavFormat {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::F32 => WavFormat::Float32,
            OutFormat::Pcm16 => WavFormat::Pcm16,
            OutFormat::Pcm24 => WavFormat::Pcm24,
        }
    }
}

fn parse_field(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("expected name=value, got `{s}`"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.global.log_level)
        .init();
    if let Some(n) = cli.global.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}

/// The error and its causes, skipping causes the outer message already
/// spells out.
fn describe(e: &anyhow::Error) -> String {
    let mut text = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !text.contains(&c) {
            text = format!("{text}: {c}");
        }
    }
    text
}
