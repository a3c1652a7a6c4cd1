use std::path::PathBuf;

use fxchain_core::corpus::{build_corpus, SamplingConfig};
use fxchain_core::metrics::evaluate_pair;
use fxchain_core::signals::pink_noise;
use fxchain_core::{
    parse_toolcalls, registry_default, write_wav, FxCall, FxChain, Policy, Regime, WavFormat,
};
use fxchain_gateway::mock::{MockReply, MockServer};
use fxchain_gateway::{
    estimate_manifest, query_estimator, EndpointConfig, EstimateOptions, GatewayError,
    PromptBundle, Replay, ResponseSource, TranscriptWriter,
};

const REPLY: &str = "<tool_call>\n{\"name\": \"gain\", \"arguments\": {\"gain_db\": 3.0}}\n</tool_call>\n<tool_call>\n{\"name\": \"panner\", \"arguments\": {\"pan\": -0.5}}\n</tool_call>\nDone.";

fn bundle() -> PromptBundle {
    PromptBundle {
        system_text: "sys".into(),
        user_text: "user".into(),
        tool_schema_json: "[]".into(),
    }
}

fn config(url: &str) -> EndpointConfig {
    let mut c = EndpointConfig::new(url, "mock-model");
    c.initial_backoff_ms = 5;
    c.timeout_s = 5.0;
    c
}

fn expected_chain() -> FxChain {
    FxChain::new(vec![
        FxCall::new("gain", [("gain_db", 3.0)]),
        FxCall::new("panner", [("pan", -0.5)]),
    ])
}

#[test]
fn fixed_reply_parses_to_fixed_chain() {
    let server = MockServer::start(vec![MockReply::ok(REPLY)]).unwrap();
    let result = query_estimator(&config(&server.base_url()), &bundle()).unwrap();
    assert_eq!(result.attempts, 1);
    let doc = parse_toolcalls(&result.text, &registry_default(), Policy::Strict).unwrap();
    assert_eq!(doc.chain, expected_chain());
    let body: serde_json::Value = serde_json::from_str(&server.bodies()[0]).unwrap();
    assert_eq!(body["model"], "mock-model");
    assert_eq!(body["messages"][0]["role"], "system");
}

#[test]
fn server_error_then_success_is_retried() {
    let server = MockServer::start(vec![MockReply::status(500), MockReply::ok(REPLY)]).unwrap();
    let result = query_estimator(&config(&server.base_url()), &bundle()).unwrap();
    assert_eq!(result.attempts, 2);
    assert_eq!(server.hits(), 2);
}

#[test]
fn retries_are_bounded() {
    let server = MockServer::start(vec![MockReply::status(503)]).unwrap();
    let mut cfg = config(&server.base_url());
    cfg.max_retries = 2;
    match query_estimator(&cfg, &bundle()) {
        Err(GatewayError::Status {
            status, attempts, ..
        }) => {
            assert_eq!(status, 503);
            assert_eq!(attempts, 3);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn client_error_is_not_retried() {
    let server = MockServer::start(vec![MockReply::status(400), MockReply::ok(REPLY)]).unwrap();
    match query_estimator(&config(&server.base_url()), &bundle()) {
        Err(GatewayError::Status {
            status: 400,
            attempts: 1,
            body_excerpt,
        }) => {
            assert!(body_excerpt.contains("scripted status 400"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn unreachable_host_is_network_error() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let mut cfg = config(&format!("http://127.0.0.1:{port}/v1"));
    cfg.max_retries = 1;
    match query_estimator(&cfg, &bundle()) {
        Err(e @ GatewayError::Network { .. }) => assert_eq!(e.attempts(), 2),
        other => panic!("{other:?}"),
    }
}

fn small_corpus(dir: &std::path::Path) -> fxchain_core::CorpusManifest {
    let src = dir.join("src.wav");
    write_wav(&src, &pink_noise(0.4, 44_100, 5), WavFormat::Float32).unwrap();
    let config = SamplingConfig {
        seed: 3,
        regime: Regime::Coarse,
        lengths: vec![1, 3],
        pairs_per_length: 2,
        ..SamplingConfig::default()
    };
    build_corpus(&config, &[src], &dir.join("corpus"), &registry_default()).unwrap()
}

#[test]
fn estimate_matches_direct_evaluation_and_replays() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = small_corpus(tmp.path());
    let corpus_dir: PathBuf = tmp.path().join("corpus");
    let reg = registry_default();
    let server = MockServer::start(vec![MockReply::ok(REPLY)]).unwrap();
    let cfg = config(&server.base_url());
    let transcript_path = tmp.path().join("session.jsonl");
    let writer = TranscriptWriter::append_to(&transcript_path).unwrap();
    let options = EstimateOptions::default();

    let live = estimate_manifest(
        &manifest,
        &corpus_dir,
        &reg,
        &ResponseSource::Live {
            config: &cfg,
            transcript: Some(&writer),
        },
        options,
    );
    assert_eq!(live.len(), 4);
    for (o, record) in live.iter().zip(&manifest.records) {
        assert_eq!(o.chain.as_ref(), Some(&expected_chain()));
        let direct = evaluate_pair(&expected_chain(), record, &corpus_dir, &reg, None).unwrap();
        assert_eq!(o.report.as_ref(), Some(&direct));
    }
    drop(server);

    let replay = Replay::load(&transcript_path).unwrap();
    assert_eq!(replay.len(), 4);
    let offline = estimate_manifest(
        &manifest,
        &corpus_dir,
        &reg,
        &ResponseSource::Replay(&replay),
        options,
    );
    assert_eq!(
        serde_json::to_string(&live).unwrap(),
        serde_json::to_string(&offline).unwrap()
    );
}
