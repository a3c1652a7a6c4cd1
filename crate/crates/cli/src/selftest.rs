//! Fast end-to-end sanity checks over a throwaway corpus.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{ensure, Result};
use fxchain_core::corpus::{build_corpus, record_rng, sample_chain, SamplingConfig};
use fxchain_core::metrics::evaluate_pair;
use fxchain_core::signals::pink_noise;
use fxchain_core::{
    emit_toolcalls, parse_toolcalls, render_chain, write_wav, FxCall, FxChain, FxRegistry, Policy,
    Regime, WavFormat,
};
use fxchain_gateway::mock::{MockReply, MockServer};
use fxchain_gateway::{estimate_manifest, EndpointConfig, EstimateOptions, ResponseSource};

struct ScratchDir(PathBuf);

impl ScratchDir {
    fn new(seed: u64) -> Result<Self> {
        let path =
            std::env::temp_dir().join(format!("fxchain-selftest-{}-{seed}", std::process::id()));
        let _ = std::fs::remove_dir_all(&path);
        std::fs::create_dir_all(&path)?;
        Ok(Self(path))
    }
}

impl Drop for ScratchDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

/// A call with every parameter at its coarse minimum, then `overrides`.
fn call_with(registry: &FxRegistry, tool: &str, overrides: &[(&str, f64)]) -> FxCall {
    let module = registry.module(tool).expect("known tool");
    let mut call = FxCall::new(
        tool,
        module.params.iter().map(|p| (p.name.clone(), p.coarse.min)),
    );
    for (k, v) in overrides {
        call.arguments.insert(k.to_string(), *v);
    }
    call
}

fn check_registry(registry: &FxRegistry) -> Result<()> {
    registry.check()?;
    ensure!(registry.modules.len() == 9, "expected 9 modules");
    ensure!(registry.param_count() == 26, "expected 26 parameters");
    Ok(())
}

fn check_codec(registry: &FxRegistry, seed: u64) -> Result<()> {
    for i in 0..200u64 {
        let mut rng = record_rng(seed, i);
        let regime = if i % 2 == 0 {
            Regime::Coarse
        } else {
            Regime::Fine
        };
        let chain = sample_chain(&mut rng, 1 + (i as usize % 9), regime, registry)?;
        let text = emit_toolcalls(&chain, registry)?;
        let back = parse_toolcalls(&text, registry, Policy::Strict)?.chain;
        ensure!(back == chain, "round trip changed chain {i}");
    }
    Ok(())
}

fn check_neutral(registry: &FxRegistry) -> Result<()> {
    let x = pink_noise(0.5, 44_100, 1);
    let eq_flat: Vec<(&str, f64)> = vec![
        ("low_gain_db", 0.0),
        ("mid_gain_db", 0.0),
        ("high_gain_db", 0.0),
    ];
    let cases = [
        call_with(registry, "gain", &[("gain_db", 0.0)]),
        call_with(registry, "panner", &[("pan", 0.0)]),
        call_with(registry, "stereo_widener", &[("width", 1.0)]),
        call_with(registry, "three_band_equalizer", &eq_flat),
        call_with(registry, "reverb", &[("mix_ratio", 0.0)]),
        call_with(registry, "delay", &[("mix_ratio", 0.0)]),
    ];
    for call in cases {
        let (y, _) = render_chain(&FxChain::new(vec![call.clone()]), &x, registry)?;
        let diff = y.max_abs_diff(&x);
        ensure!(
            diff <= 1e-6,
            "{} is not neutral (max diff {diff:e})",
            call.tool
        );
    }
    Ok(())
}

fn small_corpus(
    dir: &Path,
    registry: &FxRegistry,
    seed: u64,
) -> Result<fxchain_core::CorpusManifest> {
    std::fs::create_dir_all(dir)?;
    let src = dir.join("source.wav");
    // longer than the longest delay, so no reference can come out silent
    write_wav(&src, &pink_noise(1.5, 44_100, seed), WavFormat::Float32)?;
    let config = SamplingConfig {
        seed,
        pairs_per_length: 1,
        ..SamplingConfig::default()
    };
    Ok(build_corpus(
        &config,
        &[src],
        &dir.join("corpus"),
        registry,
    )?)
}

fn check_closure(dir: &Path, registry: &FxRegistry, seed: u64) -> Result<()> {
    let manifest = small_corpus(dir, registry, seed)?;
    let corpus = dir.join("corpus");
    for record in &manifest.records {
        let r = evaluate_pair(&record.chain, record, &corpus, registry, None)?;
        ensure!(
            r.effect_accuracy == 1.0
                && r.param_mae == Some(0.0)
                && r.mrs_lr == 0.0
                && r.mrs_ms == 0.0,
            "{} does not close: {r:?}",
            record.id
        );
    }
    Ok(())
}

fn check_gateway(dir: &Path, registry: &FxRegistry, seed: u64) -> Result<()> {
    let manifest = small_corpus(dir, registry, seed)?;
    let corpus = dir.join("corpus");
    let chain = FxChain::new(vec![call_with(registry, "gain", &[("gain_db", -3.0)])]);
    let server = MockServer::start(vec![MockReply::ok(&emit_toolcalls(&chain, registry)?)])?;
    let mut config = EndpointConfig::new(&server.base_url(), "mock");
    config.timeout_s = 5.0;
    let outcomes = estimate_manifest(
        &manifest,
        &corpus,
        registry,
        &ResponseSource::Live {
            config: &config,
            transcript: None,
        },
        EstimateOptions::default(),
    );
    for (o, record) in outcomes.iter().zip(&manifest.records) {
        let direct = evaluate_pair(&chain, record, &corpus, registry, None)?;
        ensure!(
            o.report.as_ref() == Some(&direct),
            "{}: gateway report differs",
            o.id
        );
    }
    Ok(())
}

pub fn run(registry: &FxRegistry, seed: u64) -> Result<ExitCode> {
    let scratch = ScratchDir::new(seed)?;
    let closure_dir = scratch.0.join("closure");
    let gateway_dir = scratch.0.join("gateway");
    let checks: Vec<(&str, Result<()>)> = vec![
        ("registry table", check_registry(registry)),
        ("codec round trip", check_codec(registry, seed)),
        ("neutral parameters", check_neutral(registry)),
        (
            "synthesis/evaluation closure",
            check_closure(&closure_dir, registry, seed),
        ),
        (
            "gateway loop on mock endpoint",
            check_gateway(&gateway_dir, registry, seed),
        ),
    ];
    let mut failed = 0;
    for (name, result) in &checks {
        match result {
            Ok(()) => println!("PASS  {name}"),
            Err(e) => {
                failed += 1;
                println!("FAIL  {name}: {e:#}");
            }
        }
    }
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
