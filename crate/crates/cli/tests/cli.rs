use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fxchain_core::signals::pink_noise;
use fxchain_core::{write_wav, FxCall, FxChain, WavFormat};

fn fxchain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fxchain"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn setup_corpus(dir: &Path) -> PathBuf {
    let src = dir.join("src.wav");
    write_wav(&src, &pink_noise(1.0, 44_100, 8), WavFormat::Float32).unwrap();
    let out = dir.join("corpus");
    let o = fxchain(&[
        "corpus",
        "build",
        "--seed",
        "5",
        "--lengths",
        "1..3",
        "--per-length",
        "2",
        "--sources",
        p(&src),
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    out.join("manifest.json")
}

#[test]
fn render_valid_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let wav = tmp.path().join("in.wav");
    write_wav(&wav, &pink_noise(0.3, 44_100, 1), WavFormat::Float32).unwrap();
    let chain = tmp.path().join("chain.json");
    FxChain::new(vec![FxCall::new("gain", [("gain_db", -6.0)])])
        .save(&chain)
        .unwrap();
    let out = tmp.path().join("out.wav");
    let o = fxchain(&[
        "render",
        "--chain",
        p(&chain),
        "--in",
        p(&wav),
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.exists());
    assert!(String::from_utf8_lossy(&o.stdout).contains("gain"));
}

#[test]
fn render_missing_file_names_path() {
    let tmp = tempfile::tempdir().unwrap();
    let chain = tmp.path().join("chain.json");
    FxChain::empty().save(&chain).unwrap();
    let missing = tmp.path().join("missing.wav");
    let o = fxchain(&[
        "render",
        "--chain",
        p(&chain),
        "--in",
        p(&missing),
        "--out",
        "x.wav",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing.wav"), "{}", stderr(&o));
}

#[test]
fn render_unknown_tool_names_tool() {
    let tmp = tempfile::tempdir().unwrap();
    let wav = tmp.path().join("in.wav");
    write_wav(&wav, &pink_noise(0.1, 44_100, 1), WavFormat::Float32).unwrap();
    let chain = tmp.path().join("chain.json");
    FxChain::new(vec![FxCall::new("flanger", [("rate", 1.0)])])
        .save(&chain)
        .unwrap();
    let o = fxchain(&[
        "render",
        "--chain",
        p(&chain),
        "--in",
        p(&wav),
        "--out",
        p(&tmp.path().join("o.wav")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("flanger"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(fxchain(&["--bogus"]).status.code(), Some(2));
    assert_eq!(fxchain(&["render"]).status.code(), Some(2));
    assert_eq!(
        fxchain(&["sample", "--regime", "medium"]).status.code(),
        Some(2)
    );
}

#[test]
fn sample_is_deterministic_and_seeded() {
    let a = fxchain(&["sample", "--length", "4", "--count", "3", "--seed", "9"]);
    let b = fxchain(&["sample", "--length", "4", "--count", "3", "--seed", "9"]);
    let c = fxchain(&["sample", "--length", "4", "--count", "3", "--seed", "10"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn sample_emit_parse_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let o = fxchain(&["sample", "--length", "5", "--toolcalls"]);
    let text = tmp.path().join("calls.txt");
    std::fs::write(&text, &o.stdout).unwrap();
    let parsed = fxchain(&["parse", p(&text)]);
    assert!(parsed.status.success(), "{}", stderr(&parsed));
    let json = fxchain(&["sample", "--length", "5"]);
    assert_eq!(parsed.stdout, json.stdout);
}

#[test]
fn parse_rejects_hallucinated_tool() {
    let tmp = tempfile::tempdir().unwrap();
    let text = tmp.path().join("calls.txt");
    std::fs::write(
        &text,
        "<tool_call>{\"name\": \"chorus\", \"arguments\": {}}</tool_call>",
    )
    .unwrap();
    let o = fxchain(&["parse", p(&text)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("chorus"));
}

fn read_aggregate(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("aggregate.json")).unwrap()).unwrap()
}

#[test]
fn eval_ground_truth_no_fx_and_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest_path = setup_corpus(tmp.path());
    let manifest = fxchain_core::CorpusManifest::load(&manifest_path).unwrap();

    let gt_dir = tmp.path().join("gt");
    std::fs::create_dir_all(&gt_dir).unwrap();
    for r in &manifest.records {
        r.chain
            .save(&gt_dir.join(format!("{}.json", r.id)))
            .unwrap();
    }
    let o = fxchain(&[
        "eval",
        "run",
        "--manifest",
        p(&manifest_path),
        "--pred-dir",
        p(&gt_dir),
        "--plot",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let agg = read_aggregate(&gt_dir);
    assert_eq!(agg["param_mae"], 0.0);
    assert_eq!(agg["mrs_lr"], 0.0);
    assert_eq!(agg["effect_accuracy"], 1.0);
    let csv = std::fs::read_to_string(gt_dir.join("eval.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + manifest.records.len());
    assert!(gt_dir
        .join("plots")
        .join(format!("{}_pred.png", manifest.records[0].id))
        .exists());

    let nofx = tmp.path().join("nofx");
    let o = fxchain(&[
        "baseline",
        "predict",
        "--kind",
        "no_fx",
        "--manifest",
        p(&manifest_path),
        "--out",
        p(&nofx),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = fxchain(&[
        "eval",
        "run",
        "--manifest",
        p(&manifest_path),
        "--pred-dir",
        p(&nofx),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let agg = read_aggregate(&nofx);
    assert!(agg["mrs_lr"].as_f64().unwrap() > 0.0);
    assert_eq!(agg["order_correlation"], serde_json::Value::Null);
    assert_eq!(agg["undefined_correlations"], manifest.records.len());

    std::fs::write(
        gt_dir.join(format!("{}.json", manifest.records[0].id)),
        "{not json",
    )
    .unwrap();
    let out = tmp.path().join("broken_eval");
    let o = fxchain(&[
        "eval",
        "run",
        "--manifest",
        p(&manifest_path),
        "--pred-dir",
        p(&gt_dir),
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(read_aggregate(&out)["failed"], 1);
}

#[test]
fn corpus_build_refuses_non_empty_output() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = setup_corpus(tmp.path());
    let src = tmp.path().join("src.wav");
    let o = fxchain(&[
        "corpus",
        "build",
        "--sources",
        p(&src),
        "--out",
        p(manifest.parent().unwrap()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("not empty"));
}

#[test]
fn gateway_prompt_reports_missing_field() {
    let o = fxchain(&[
        "gateway",
        "prompt",
        "--template",
        "judge_nlg",
        "--field",
        "conversation=hi",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cot"));
    let o = fxchain(&[
        "gateway",
        "prompt",
        "--template",
        "judge_nlg",
        "--field",
        "conversation=hi",
        "--field",
        "cot=t",
    ]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("Poor (1)"));
}

#[test]
fn gateway_estimate_then_replay() {
    use fxchain_gateway::mock::{MockReply, MockServer};
    let tmp = tempfile::tempdir().unwrap();
    let manifest = setup_corpus(tmp.path());
    let server = MockServer::start(vec![MockReply::ok(
        "<tool_call>\n{\"name\": \"gain\", \"arguments\": {\"gain_db\": 2.0}}\n</tool_call>",
    )])
    .unwrap();
    let live = tmp.path().join("live");
    let o = fxchain(&[
        "gateway",
        "estimate",
        "--manifest",
        p(&manifest),
        "--endpoint",
        &server.base_url(),
        "--model",
        "m",
        "--out",
        p(&live),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    drop(server);
    let offline = tmp.path().join("offline");
    let o = fxchain(&[
        "gateway",
        "estimate",
        "--manifest",
        p(&manifest),
        "--replay",
        p(&live.join("transcript.jsonl")),
        "--out",
        p(&offline),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(live.join("estimates.json")).unwrap(),
        std::fs::read(offline.join("estimates.json")).unwrap()
    );
}

#[test]
fn selftest_passes() {
    let o = fxchain(&["selftest"]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stdout)
    );
}
