use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use fxchain_core::corpus::{
    build_corpus, parse_lengths, record_rng, sample_chain, CorpusManifest, SamplingConfig,
};
use fxchain_core::metrics::{aggregate, evaluate_batch, write_outcomes_csv, RecordEmbeddings};
use fxchain_core::signals::{synth_test_signal, SignalKind};
use fxchain_core::{
    emit_toolcalls, parse_toolcalls_bytes, read_wav, registry_default, render_chain, write_wav,
    FxChain, FxRegistry, WavFormat,
};
use fxchain_gateway::prompts::{render_template, tool_schema_json};
use fxchain_gateway::{
    baseline_predict, estimate_manifest, random_fx_monte_carlo, write_estimates, EndpointConfig,
    EstimateOptions, Replay, ResponseSource, TranscriptWriter,
};
use log::info;

use crate::{BaselineCmd, Cli, Command, CorpusCmd, EvalCmd, GatewayCmd, RegistryCmd};

fn load_registry(path: Option<&Path>) -> Result<FxRegistry> {
    match path {
        None => Ok(registry_default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading registry {}", p.display()))?;
            FxRegistry::from_json(&text).with_context(|| format!("registry {}", p.display()))
        }
    }
}

fn manifest_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn load_manifest(path: &Path, registry: &FxRegistry) -> Result<CorpusManifest> {
    let manifest = CorpusManifest::load(path)?;
    if manifest.registry_fingerprint != registry.fingerprint() {
        log::warn!("{} was built with a different registry", path.display());
    }
    Ok(manifest)
}

pub fn run(cli: &Cli) -> Result<ExitCode> {
    let registry = load_registry(cli.global.registry.as_deref())?;
    let seed = cli.global.seed;
    match &cli.command {
        Command::Registry(cmd) => registry_cmd(cmd, &registry),
        Command::Render {
            chain,
            input,
            output,
            format,
        } => {
            let chain = FxChain::load(chain)?;
            let audio = read_wav(input)?;
            let (out, trace) = render_chain(&chain, &audio, &registry)?;
            write_wav(output, &out, (*format).into())?;
            for e in &trace.entries {
                println!(
                    "{:<22} peak {:>8.2} -> {:>8.2} dBFS  rms {:>8.2} -> {:>8.2} dBFS  {:>8} us",
                    e.tool,
                    db(e.input_peak),
                    db(e.output_peak),
                    db(e.input_rms),
                    db(e.output_rms),
                    e.elapsed.as_micros()
                );
            }
            println!("wrote {}", output.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Sample {
            length,
            regime,
            count,
            toolcalls,
        } => {
            for i in 0..*count {
                let mut rng = record_rng(seed, i as u64);
                let chain = sample_chain(&mut rng, *length, *regime, &registry)?;
                if *toolcalls {
                    println!("{}", emit_toolcalls(&chain, &registry)?);
                } else {
                    println!("{}", chain.to_json());
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Parse { input, policy } => {
            let bytes = if input.as_os_str() == "-" {
                let mut buf = Vec::new();
                std::io::stdin().read_to_end(&mut buf)?;
                buf
            } else {
                std::fs::read(input).with_context(|| format!("reading {}", input.display()))?
            };
            let doc = parse_toolcalls_bytes(&bytes, &registry, *policy)?;
            for issue in &doc.issues {
                eprintln!("warning: {issue}");
            }
            println!("{}", doc.chain.to_json());
            Ok(ExitCode::SUCCESS)
        }
        Command::Emit { chain } => {
            let chain = FxChain::load(chain)?;
            println!("{}", emit_toolcalls(&chain, &registry)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Corpus(cmd) => corpus_cmd(cmd, &registry, seed),
        Command::Eval(cmd) => eval_cmd(cmd, &registry),
        Command::Gateway(cmd) => gateway_cmd(cmd, &registry),
        Command::Baseline(cmd) => baseline_cmd(cmd, &registry, seed),
        Command::Selftest => crate::selftest::run(&registry, seed),
    }
}

fn db(x: f64) -> f64 {
    if x > 0.0 {
        20.0 * x.log10()
    } else {
        f64::NEG_INFINITY
    }
}

fn registry_cmd(cmd: &RegistryCmd, registry: &FxRegistry) -> Result<ExitCode> {
    match cmd {
        RegistryCmd::Export { out } => {
            let json = registry.to_json();
            match out {
                Some(p) => std::fs::write(p, json + "\n")
                    .with_context(|| format!("writing {}", p.display()))?,
                None => println!("{json}"),
            }
        }
        RegistryCmd::Schema { regime } => println!("{}", tool_schema_json(registry, *regime)),
        RegistryCmd::Fingerprint => println!("{}", registry.fingerprint()),
    }
    Ok(ExitCode::SUCCESS)
}

fn wav_sources(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .with_context(|| format!("reading source directory {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .wav files in {}", path.display());
    }
    Ok(files)
}

fn corpus_cmd(cmd: &CorpusCmd, registry: &FxRegistry, seed: u64) -> Result<ExitCode> {
    match cmd {
        CorpusCmd::Build {
            regime,
            lengths,
            per_length,
            sources,
            out,
            target_rms,
        } => {
            let config = SamplingConfig {
                seed,
                regime: *regime,
                lengths: parse_lengths(lengths).map_err(anyhow::Error::msg)?,
                pairs_per_length: *per_length,
                target_rms_dbfs: *target_rms,
            };
            let sources = wav_sources(sources)?;
            let manifest = build_corpus(&config, &sources, out, registry)?;
            println!(
                "wrote {} records to {}",
                manifest.records.len(),
                out.join(fxchain_core::corpus::MANIFEST_FILE).display()
            );
        }
        CorpusCmd::Signals {
            out,
            duration,
            sample_rate,
        } => {
            if !(*duration > 0.0) {
                bail!("--duration must be positive");
            }
            std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
            for (kind, name) in [
                (SignalKind::Sine, "sine"),
                (SignalKind::Sweep, "sweep"),
                (SignalKind::PinkNoise, "pink_noise"),
                (SignalKind::Impulse, "impulse"),
            ] {
                let path = out.join(format!("{name}.wav"));
                write_wav(
                    &path,
                    &synth_test_signal(kind, *duration, *sample_rate),
                    WavFormat::Float32,
                )?;
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn load_prediction(dir: &Path, id: &str) -> Result<FxChain, String> {
    let path = dir.join(format!("{id}.json"));
    if !path.exists() {
        return Err(format!("missing prediction {}", path.display()));
    }
    FxChain::load(&path).map_err(|e| e.to_string())
}

fn eval_cmd(cmd: &EvalCmd, registry: &FxRegistry) -> Result<ExitCode> {
    let EvalCmd::Run {
        manifest: manifest_path,
        pred_dir,
        embeddings,
        out,
        plot,
    } = cmd;
    let manifest = load_manifest(manifest_path, registry)?;
    let dir = manifest_dir(manifest_path);
    let predictions: Vec<Result<FxChain, String>> = manifest
        .records
        .iter()
        .map(|r| load_prediction(pred_dir, &r.id))
        .collect();
    let embeddings: Option<BTreeMap<String, RecordEmbeddings>> = match embeddings {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(
                serde_json::from_str(&text)
                    .with_context(|| format!("embeddings {}", p.display()))?,
            )
        }
        None => None,
    };
    let outcomes = evaluate_batch(&manifest, &dir, &predictions, registry, embeddings.as_ref());
    let agg = aggregate(&outcomes);

    let out = out.clone().unwrap_or_else(|| pred_dir.clone());
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let csv_path = out.join("eval.csv");
    let file = std::fs::File::create(&csv_path)
        .with_context(|| format!("creating {}", csv_path.display()))?;
    write_outcomes_csv(&outcomes, file)?;
    let agg_path = out.join("aggregate.json");
    std::fs::write(&agg_path, serde_json::to_string_pretty(&agg)? + "\n")?;

    if *plot {
        let plot_dir = out.join("plots");
        for (record, pred) in manifest.records.iter().zip(&predictions) {
            if let Ok(chain) = pred {
                crate::plot::plot_record(record, chain, &dir, &plot_dir, registry)
                    .with_context(|| format!("plotting {}", record.id))?;
            }
        }
        info!("spectrograms in {}", plot_dir.display());
    }

    for o in outcomes.iter().filter(|o| o.error.is_some()) {
        eprintln!(
            "failed {}: {}",
            o.id,
            o.error.as_deref().unwrap_or_default()
        );
    }
    println!("{}", serde_json::to_string_pretty(&agg)?);
    println!("wrote {} and {}", csv_path.display(), agg_path.display());
    Ok(if agg.failed > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn gateway_cmd(cmd: &GatewayCmd, registry: &FxRegistry) -> Result<ExitCode> {
    match cmd {
        GatewayCmd::Estimate {
            manifest: manifest_path,
            endpoint,
            model,
            out,
            api_key_env,
            transcript,
            replay,
            policy,
            regime,
            timeout,
            max_retries,
        } => {
            let manifest = load_manifest(manifest_path, registry)?;
            let dir = manifest_dir(manifest_path);
            let options = EstimateOptions {
                policy: *policy,
                regime: *regime,
            };
            std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
            let outcomes = if let Some(replay_path) = replay {
                let replay = Replay::load(replay_path)?;
                estimate_manifest(
                    &manifest,
                    &dir,
                    registry,
                    &ResponseSource::Replay(&replay),
                    options,
                )
            } else {
                let Some(url) = endpoint else {
                    bail!("--endpoint is required unless --replay is given");
                };
                let mut config = EndpointConfig::new(url, model);
                config.api_key_env_var = api_key_env.clone();
                config.timeout_s = *timeout;
                config.max_retries = *max_retries;
                config.check()?;
                let transcript_path = transcript
                    .clone()
                    .unwrap_or_else(|| out.join("transcript.jsonl"));
                let writer = TranscriptWriter::append_to(&transcript_path)?;
                info!("logging requests to {}", transcript_path.display());
                estimate_manifest(
                    &manifest,
                    &dir,
                    registry,
                    &ResponseSource::Live {
                        config: &config,
                        transcript: Some(&writer),
                    },
                    options,
                )
            };
            let summary = write_estimates(&outcomes, out)?;
            let failed = outcomes.iter().filter(|o| o.error.is_some()).count();
            for o in outcomes.iter().filter(|o| o.error.is_some()) {
                eprintln!(
                    "failed {}: {}",
                    o.id,
                    o.error.as_deref().unwrap_or_default()
                );
            }
            println!(
                "{} of {} records estimated; wrote {}",
                outcomes.len() - failed,
                outcomes.len(),
                summary.display()
            );
            Ok(if failed > 0 {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            })
        }
        GatewayCmd::Prompt { template, fields } => {
            let fields: BTreeMap<String, String> = fields.iter().cloned().collect();
            print!("{}", render_template(*template, &fields)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn baseline_cmd(cmd: &BaselineCmd, registry: &FxRegistry, seed: u64) -> Result<ExitCode> {
    match cmd {
        BaselineCmd::Predict {
            kind,
            manifest,
            out,
            regime,
        } => {
            let manifest = load_manifest(manifest, registry)?;
            std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
            for (i, record) in manifest.records.iter().enumerate() {
                let mut rng = record_rng(seed, i as u64);
                let chain = baseline_predict(*kind, &mut rng, registry, *regime);
                chain.save(&out.join(format!("{}.json", record.id)))?;
            }
            println!(
                "wrote {} predictions to {}",
                manifest.records.len(),
                out.display()
            );
        }
        BaselineCmd::MonteCarlo { trials, regime } => {
            if *trials < 2 {
                bail!("--trials must be at least 2");
            }
            let stats = random_fx_monte_carlo(*trials, seed, registry, *regime);
            println!("{}", serde_json::to_string_pretty(&stats)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}
