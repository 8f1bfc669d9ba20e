mod common;

use axum::http::{Method, StatusCode};
use common::{app, call, error_kind, get, post, store, txt2img_value};
use serde_json::{json, Value};

#[tokio::test]
async fn healthz_reports_fixture_counts() {
    let kb = store();
    let (status, bytes) = call(&app(&kb), Method::GET, "/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(
        String::from_utf8(bytes).unwrap(),
        r#"{"nodes":12,"models":5,"workflows":8,"offline":true}"#
    );
}

#[tokio::test]
async fn validate_accepts_the_fixture_in_both_forms() {
    let kb = store();
    let app = app(&kb);
    let (status, body) = post(&app, "/api/workflow/validate", &json!({"format": "json", "payload": txt2img_value()})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!((body["pass"].clone(), body["issues"].clone()), (json!(true), json!([])));

    let (_, code) = post(&app, "/api/workflow/convert", &json!({"from": "json", "to": "code", "payload": txt2img_value()})).await;
    assert_eq!(code["format"], "code");
    let (status, body) = post(&app, "/api/workflow/validate", &json!({"format": "code", "payload": code["payload"]})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["pass"], true);
}

#[tokio::test]
async fn convert_round_trips_through_code() {
    let kb = store();
    let app = app(&kb);
    let (_, code) = post(&app, "/api/workflow/convert", &json!({"from": "json", "to": "code", "payload": txt2img_value()})).await;
    let text = code["payload"].as_str().unwrap();
    assert_eq!(text.lines().filter(|l| l.contains('=')).count(), 7, "{text}");
    let (status, back) = post(&app, "/api/workflow/convert", &json!({"from": "code", "to": "json", "payload": text})).await;
    assert_eq!(status, StatusCode::OK);
    let nodes = back["payload"].as_object().unwrap();
    assert_eq!(nodes.len(), 7);
    let mut classes: Vec<&str> = nodes.values().map(|n| n["class_type"].as_str().unwrap()).collect();
    classes.sort();
    let original = txt2img_value();
    let mut want: Vec<&str> = original.as_object().unwrap().values().map(|n| n["class_type"].as_str().unwrap()).collect();
    want.sort();
    assert_eq!(classes, want);
}

#[tokio::test]
async fn invalid_workflow_is_reported_not_errored() {
    let kb = store();
    let mut wf = txt2img_value();
    wf["9"]["class_type"] = json!("SaveImageWebp");
    let (status, body) = post(&app(&kb), "/api/workflow/validate", &json!({"format": "json", "payload": wf})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["pass"], false);
    assert_eq!(body["issues"][0]["kind"], "missing-node");
}

#[tokio::test]
async fn recommend_ranks_cards_by_kind() {
    let kb = store();
    let app = app(&kb);
    let (status, body) = post(
        &app,
        "/api/recommend/workflows",
        &json!({"query": "Generate an image from a text prompt with a checkpoint, positive and negative prompts and a KSampler."}),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let cards = body["cards"].as_array().unwrap();
    assert_eq!(cards.len(), 3);
    assert_eq!(cards[0]["id"], "txt2img-basic");
    assert_eq!(cards.iter().map(|c| c["rank"].as_u64().unwrap()).collect::<Vec<_>>(), [1, 2, 3]);

    let (_, body) = post(&app, "/api/recommend/nodes", &json!({"query": "upscale an image"})).await;
    assert!(body["cards"].as_array().unwrap().iter().any(|c| c["id"] == "ImageScale"), "{body}");

    let (_, body) = post(&app, "/api/recommend/models", &json!({"query": "a lora for pixel art"})).await;
    assert_eq!(body["cards"], json!([]));
    assert_eq!(body["clarification"]["field"], "base_model");

    let (_, body) = post(&app, "/api/recommend/models", &json!({"query": "a lora for pixel art", "context": "I use SDXL"})).await;
    let cards = body["cards"].as_array().unwrap();
    assert!(!cards.is_empty() && cards.iter().all(|c| c["base_model"] == "SDXL"), "{body}");
}

#[tokio::test]
async fn errors_use_the_common_shape_and_status() {
    let kb = store();
    let app = app(&kb);
    let (status, body) = post(&app, "/api/recommend/prompts", &json!({"query": "x"})).await;
    assert_eq!((status, error_kind(&body)), (StatusCode::NOT_FOUND, "not-found"));

    let (status, bytes) = call(&app, Method::POST, "/api/chat", Some("{not json")).await;
    let body: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!((status, error_kind(&body)), (StatusCode::BAD_REQUEST, "invalid-request"));
    assert!(body["error"]["detail"].as_str().unwrap().contains("malformed"));

    let (status, body) = post(&app, "/api/workflow/validate", &json!({"format": "json", "payload": "[1,2"})).await;
    assert_eq!((status, error_kind(&body)), (StatusCode::BAD_REQUEST, "invalid-json"));

    let (status, body) = post(&app, "/api/workflow/convert", &json!({"from": "code", "to": "json", "payload": "x = = ("})).await;
    assert_eq!((status, error_kind(&body)), (StatusCode::BAD_REQUEST, "invalid-code"));

    let (status, body) = post(&app, "/api/recommend/workflows", &json!({"query": "   "})).await;
    assert_eq!((status, error_kind(&body)), (StatusCode::BAD_REQUEST, "invalid-request"));

    let (status, body) = get(&app, "/api/nodes/FaceDetailer").await;
    assert_eq!((status, error_kind(&body)), (StatusCode::NOT_FOUND, "unknown-node"));
    assert_eq!(
        body["error"]["detail"]["install_hint"],
        "https://github.com/ltdrdata/ComfyUI-Impact-Pack"
    );

    let (status, body) = get(&app, "/api/nowhere").await;
    assert_eq!((status, error_kind(&body)), (StatusCode::NOT_FOUND, "not-found"));
}

#[tokio::test]
async fn chat_keeps_per_session_state() {
    let kb = store();
    let app = app(&kb);
    let (status, first) = post(&app, "/api/chat", &json!({"session_id": "a", "message": "recommend a lora for portraits"})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(first["attachments"][0]["kind"], "clarification");

    // A different session has no pending question, so "SDXL" is not an answer there.
    let (_, other) = post(&app, "/api/chat", &json!({"session_id": "b", "message": "SDXL"})).await;
    assert!(other["attachments"].as_array().unwrap().iter().all(|a| a["kind"] != "model-card"), "{other}");

    let (_, second) = post(&app, "/api/chat", &json!({"session_id": "a", "message": "SDXL"})).await;
    let models: Vec<&Value> = second["attachments"].as_array().unwrap().iter().filter(|a| a["kind"] == "model-card").collect();
    assert_eq!(models.len(), 2, "{second}");
    assert!(models.iter().all(|m| m["payload"]["base_model"] == "SDXL"));

    let (status, body) = post(&app, "/api/chat", &json!({"session_id": "", "message": "hi"})).await;
    assert_eq!((status, error_kind(&body)), (StatusCode::BAD_REQUEST, "invalid-request"));
}

#[tokio::test]
async fn paramsearch_runs_the_grid_in_order() {
    let kb = store();
    let app = app(&kb);
    let (status, body) = post(
        &app,
        "/api/paramsearch",
        &json!({"workflow": txt2img_value(), "grid": ["3.cfg=6,7", "3.denoise=0.5,1.0"]}),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let runs = body["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 4);
    assert!(runs.iter().enumerate().all(|(i, r)| r["index"] == i && r["status"] == "done"));

    let spec = json!({"axes": [{"node_id": "3", "input_name": "steps", "values": [10, 20, 30]}]});
    let (_, body) = post(&app, "/api/paramsearch", &json!({"workflow": txt2img_value(), "grid": spec})).await;
    assert_eq!(body["runs"].as_array().unwrap().len(), 3);

    let (status, body) = post(&app, "/api/paramsearch", &json!({"workflow": txt2img_value(), "grid": ["42.cfg=1,2"]})).await;
    assert_eq!((status, error_kind(&body)), (StatusCode::BAD_REQUEST, "invalid-grid"));
}

#[tokio::test]
async fn node_endpoint_returns_spec_and_doc() {
    let kb = store();
    let (status, body) = get(&app(&kb), "/api/nodes/KSampler").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["spec"]["class_type"], "KSampler");
    assert!(body["doc"].is_object());
    let md = body["markdown"].as_str().unwrap();
    assert!(md.contains("## Input types") && md.contains("`seed`"), "{md}");
}

#[tokio::test]
async fn feedback_is_counted() {
    let kb = store();
    let app = app(&kb);
    let (_, body) = post(&app, "/api/feedback", &json!({"accepted": true, "kind": "workflow", "id": "txt2img-basic"})).await;
    assert_eq!(body, json!({"recorded": 1, "accepted": 1}));
    let (_, body) = post(&app, "/api/feedback", &json!({"accepted": false})).await;
    assert_eq!(body, json!({"recorded": 2, "accepted": 1}));
    let (status, body) = post(&app, "/api/feedback", &json!({"id": "x"})).await;
    assert_eq!((status, error_kind(&body)), (StatusCode::BAD_REQUEST, "invalid-request"));
}

fn recorded_sequence() -> Vec<(Method, &'static str, Option<String>)> {
    let wf = txt2img_value();
    vec![
        (Method::GET, "/healthz", None),
        (Method::POST, "/api/chat", Some(json!({"session_id": "s", "message": "recommend a lora"}).to_string())),
        (Method::POST, "/api/chat", Some(json!({"session_id": "s", "message": "SDXL"}).to_string())),
        (Method::POST, "/api/chat", Some(json!({"session_id": "s", "message": "I need a workflow to turn text into an image"}).to_string())),
        (Method::POST, "/api/chat", Some(json!({"session_id": "s", "message": "sweep 3.cfg=6,7"}).to_string())),
        (Method::POST, "/api/chat", Some(json!({"session_id": "t", "message": "write 3 prompts for a misty forest"}).to_string())),
        (Method::POST, "/api/chat", Some(json!({"session_id": "t", "message": "what does KSampler do?"}).to_string())),
        (Method::POST, "/api/recommend/workflows", Some(json!({"query": "upscale a picture"}).to_string())),
        (Method::POST, "/api/recommend/nodes", Some(json!({"query": "load a lora"}).to_string())),
        (Method::POST, "/api/recommend/models", Some(json!({"query": "anime lora", "context": "SD1.5"}).to_string())),
        (Method::POST, "/api/workflow/validate", Some(json!({"format": "json", "payload": wf}).to_string())),
        (Method::POST, "/api/workflow/convert", Some(json!({"from": "json", "to": "code", "payload": wf}).to_string())),
        (Method::POST, "/api/paramsearch", Some(json!({"workflow": wf, "grid": ["3.steps=10,20"]}).to_string())),
        (Method::GET, "/api/nodes/VAEDecode", None),
        (Method::GET, "/api/nodes/Nope", None),
        (Method::POST, "/api/feedback", Some(json!({"accepted": true}).to_string())),
        (Method::POST, "/api/recommend/workflows", Some("garbage".to_string())),
    ]
}

#[tokio::test]
async fn offline_replay_is_byte_identical() {
    let kb = store();
    let mut transcripts = Vec::new();
    for _ in 0..2 {
        let app = app(&kb);
        let mut transcript = Vec::new();
        for (method, path, body) in recorded_sequence() {
            transcript.push(call(&app, method, path, body.as_deref()).await);
        }
        transcripts.push(transcript);
    }
    assert_eq!(transcripts[0].len(), recorded_sequence().len());
    for (i, (a, b)) in transcripts[0].iter().zip(&transcripts[1]).enumerate() {
        assert_eq!(a, b, "response {i} differs");
    }
}
