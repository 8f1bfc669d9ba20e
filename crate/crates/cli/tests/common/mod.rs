#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use copilot_cli::cli::{load_engine, run, Outcome};
use copilot_cli::service::{router, AppState};
use http_body_util::BodyExt;
use serde_json::Value;
use tempfile::TempDir;
use tower::ServiceExt;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

pub fn fixture(name: &str) -> PathBuf {
    fixtures().join(name)
}

/// Runs the CLI in-process with `--offline` and the given store.
pub fn cli(kb: &TempDir, args: &[&str]) -> Outcome {
    let mut argv = vec!["copilot", "--offline", "--kb-dir", kb.path().to_str().unwrap()];
    argv.extend_from_slice(args);
    run(argv)
}

/// A disk store populated from the fixture corpus through `copilot ingest`.
pub fn store() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&dir, &["ingest", fixture("kb").to_str().unwrap()]);
    assert_eq!(out.code, 0, "{out:?}");
    dir
}

pub fn app(kb: &TempDir) -> Router {
    let copilot = load_engine(kb.path(), true, None).unwrap();
    router(Arc::new(AppState::new(Arc::new(copilot))))
}

pub async fn call(app: &Router, method: Method, path: &str, body: Option<&str>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(path)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

pub async fn post(app: &Router, path: &str, body: &Value) -> (StatusCode, Value) {
    let (status, bytes) = call(app, Method::POST, path, Some(&body.to_string())).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

pub async fn get(app: &Router, path: &str) -> (StatusCode, Value) {
    let (status, bytes) = call(app, Method::GET, path, None).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

pub fn txt2img_text() -> String {
    std::fs::read_to_string(fixture("txt2img.json")).unwrap()
}

pub fn txt2img_value() -> Value {
    serde_json::from_str(&txt2img_text()).unwrap()
}

pub fn error_kind(body: &Value) -> &str {
    body["error"]["kind"].as_str().unwrap_or_else(|| panic!("not an error body: {body}"))
}
