//! Drives the compiled `copilot` binary.

mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::{fixture, store};
use copilot_core::kb::store_file_name;
use serde_json::{json, Value};

fn copilot(kb: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_copilot"))
        .arg("--kb-dir")
        .arg(kb)
        .args(args)
        .env_remove("COPILOT_KB_DIR")
        .env("COPILOT_OFFLINE", "1")
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn convert_prints_dsl_text() {
    let kb = store();
    let out = copilot(kb.path(), &["convert", "--from", "json", "--to", "code", fixture("txt2img.json").to_str().unwrap()]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert!(serde_json::from_str::<Value>(&text).is_err(), "expected DSL, got JSON");
    assert_eq!(text.lines().filter(|l| !l.trim().is_empty()).count(), 7, "{text}");
    assert!(text.contains("KSampler("));
}

#[test]
fn validate_bad_workflow_exits_nonzero_with_report() {
    let kb = store();
    let dir = tempfile::tempdir().unwrap();
    let mut wf: Value = serde_json::from_str(&std::fs::read_to_string(fixture("txt2img.json")).unwrap()).unwrap();
    wf["8"]["inputs"].as_object_mut().unwrap().remove("vae");
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, wf.to_string()).unwrap();

    let out = copilot(kb.path(), &["validate", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["pass"], false);
    assert_eq!(report["issues"][0]["kind"], "missing-required-input");

    let good = copilot(kb.path(), &["validate", fixture("txt2img.json").to_str().unwrap()]);
    assert_eq!(good.status.code(), Some(0));
}

#[test]
fn invalid_flags_print_usage_and_fail() {
    let kb = store();
    for args in [&["validate", "--bogus", "x.json"][..], &["frobnicate"][..], &["convert", "--from", "yaml", "--to", "code", "x"][..]] {
        let out = copilot(kb.path(), args);
        assert!(!out.status.success(), "{args:?}");
        assert!(out.stdout.is_empty());
        let err = String::from_utf8(out.stderr).unwrap();
        assert!(err.contains("Usage:"), "{err}");
    }
    let help = copilot(kb.path(), &["--help"]);
    assert!(help.status.success());
    assert!(stdout(&help).contains("eval-recall"));
}

#[test]
fn eval_recall_prints_a_report() {
    let kb = store();
    let dir = tempfile::tempdir().unwrap();
    let cases = dir.path().join("cases.jsonl");
    let lines = [
        json!({"instruction": "Generate an image from a text prompt with a checkpoint, positive and negative prompts and a KSampler.", "gold_id": "txt2img-basic", "kind": "workflow"}),
        json!({"instruction": "Guide image generation with canny edges from a reference picture using ControlNet.", "gold_id": "controlnet-canny", "kind": "workflow"}),
        json!({"instruction": "Upscale an image with a chosen interpolation method.", "gold_id": "ImageScale", "kind": "node"}),
    ];
    std::fs::write(&cases, lines.iter().map(Value::to_string).collect::<Vec<_>>().join("\n")).unwrap();

    let out = copilot(kb.path(), &["eval-recall", cases.to_str().unwrap(), "--k", "3", "--offline"]);
    assert!(out.status.success(), "{out:?}");
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["k"], 3);
    assert_eq!(report["total"], 3);
    assert_eq!(report["recall_at_k"], 1.0, "{report}");

    std::fs::write(&cases, json!({"instruction": "x", "gold_id": "no-such", "kind": "workflow"}).to_string()).unwrap();
    let out = copilot(kb.path(), &["eval-recall", cases.to_str().unwrap(), "--k", "3"]);
    assert_eq!(out.status.code(), Some(1));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["rejected"][0]["gold_id"], "no-such");
}

#[test]
fn missing_store_is_a_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = copilot(&dir.path().join("absent"), &["recommend", "workflows", "anything"]);
    assert_eq!(out.status.code(), Some(1));
    let body: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(body["error"]["kind"], "knowledge-base");
}

#[test]
fn docgen_documents_nodes_offline() {
    let kb = store();
    let src = tempfile::tempdir().unwrap();
    std::fs::write(
        src.path().join("nodes.py"),
        "class KSampler:\n    \"\"\"Denoises a latent.\"\"\"\n    def sample(self, model, seed, steps, cfg):\n        return (latent,)\n",
    )
    .unwrap();
    let out = copilot(kb.path(), &["docgen", "--source", src.path().to_str().unwrap(), "--class", "KSampler"]);
    assert!(out.status.success(), "{out:?}");
    let summary: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["documented"], json!(["KSampler"]));
    let spec: Value = serde_json::from_str(
        &std::fs::read_to_string(kb.path().join("nodes").join(store_file_name("KSampler"))).unwrap(),
    )
    .unwrap();
    assert!(spec["doc"]["description"].as_str().is_some_and(|d| !d.is_empty()));
}
