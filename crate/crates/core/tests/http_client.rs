//! The completion client against a local stub endpoint.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use portal_synth::corpus::PromptRecord;
use portal_synth::llm::{Completer, CompletionRequest, FinishReason, HttpCompleter, LlmError, ProviderConfig};
use portal_synth::stage2::{generate_messages, Stage2Template, DEFAULT_SENTINEL};

#[derive(Default)]
struct Stub {
    /// Statuses to return before succeeding; empty means 200.
    script: Mutex<VecDeque<u16>>,
    always: Option<u16>,
    bodies: Mutex<Vec<Bytes>>,
    auth: Mutex<Vec<Option<String>>>,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    delay_ms: u64,
    finish_reason: &'static str,
}

async fn handler(State(stub): State<Arc<Stub>>, headers: HeaderMap, body: Bytes) -> (StatusCode, Json<Value>) {
    let now = stub.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    stub.peak.fetch_max(now, Ordering::SeqCst);
    stub.bodies.lock().unwrap().push(body.clone());
    stub.auth
        .lock()
        .unwrap()
        .push(headers.get("authorization").map(|v| v.to_str().unwrap().to_string()));
    if stub.delay_ms > 0 {
        tokio::time::sleep(Duration::from_millis(stub.delay_ms)).await;
    }
    let status = stub
        .always
        .or_else(|| stub.script.lock().unwrap().pop_front())
        .unwrap_or(200);
    stub.in_flight.fetch_sub(1, Ordering::SeqCst);
    if status != 200 {
        return (
            StatusCode::from_u16(status).unwrap(),
            Json(json!({ "error": "scripted" })),
        );
    }
    let req: Value = serde_json::from_slice(&body).unwrap();
    let prompt = req["prompt"].as_str().unwrap();
    let text = format!(" reply to {} chars", prompt.len());
    (
        StatusCode::OK,
        Json(json!({ "choices": [{ "text": text, "finish_reason": stub.finish_reason }] })),
    )
}

async fn start(stub: Stub) -> (String, Arc<Stub>) {
    let stub = Arc::new(stub);
    let app = Router::new()
        .route("/v1/completions", post(handler))
        .with_state(stub.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (format!("http://{addr}/v1/completions"), stub)
}

fn config(url: &str) -> ProviderConfig {
    ProviderConfig {
        endpoint_url: url.to_string(),
        api_key_env: String::new(),
        backoff_base_ms: 1,
        timeout_seconds: 10,
        ..Default::default()
    }
}

fn stub() -> Stub {
    Stub {
        finish_reason: "stop",
        ..Default::default()
    }
}

#[tokio::test]
async fn rate_limits_are_retried_with_identical_bodies() {
    let (url, stub) = start(Stub {
        script: Mutex::new(VecDeque::from([429, 429])),
        ..stub()
    })
    .await;
    let client = HttpCompleter::new(config(&url)).unwrap();
    let out = client
        .complete(&CompletionRequest::new("hello", 0).with_stop("Example Code:"))
        .await
        .unwrap();
    assert_eq!(out.text, " reply to 5 chars");
    assert_eq!(out.finish_reason, FinishReason::Stop);
    let bodies = stub.bodies.lock().unwrap();
    assert_eq!(bodies.len(), 3);
    assert!(bodies.iter().all(|b| b == &bodies[0]));
}

#[tokio::test]
async fn server_errors_exhaust_retries() {
    let (url, stub) = start(Stub {
        always: Some(500),
        ..stub()
    })
    .await;
    let client = HttpCompleter::new(ProviderConfig {
        max_retries: 2,
        ..config(&url)
    })
    .unwrap();
    let err = client.complete(&CompletionRequest::new("x", 0)).await.unwrap_err();
    assert!(matches!(err, LlmError::RetriesExhausted { attempts: 3, .. }), "{err:?}");
    assert_eq!(stub.bodies.lock().unwrap().len(), 3);
}

#[tokio::test]
async fn auth_failure_is_not_retried() {
    for status in [401, 403] {
        let (url, stub) = start(Stub {
            always: Some(status),
            ..stub()
        })
        .await;
        let client = HttpCompleter::new(config(&url)).unwrap();
        let err = client.complete(&CompletionRequest::new("x", 0)).await.unwrap_err();
        assert!(matches!(err, LlmError::Auth { status: s } if s == status), "{err:?}");
        assert_eq!(stub.bodies.lock().unwrap().len(), 1);
    }
}

#[tokio::test]
async fn other_client_errors_surface_status() {
    let (url, _stub) = start(Stub {
        always: Some(400),
        ..stub()
    })
    .await;
    let client = HttpCompleter::new(config(&url)).unwrap();
    let err = client.complete(&CompletionRequest::new("x", 0)).await.unwrap_err();
    assert!(matches!(err, LlmError::Status { status: 400, .. }), "{err:?}");
}

#[tokio::test]
async fn request_carries_configured_fields() {
    let (url, stub) = start(Stub {
        finish_reason: "length",
        ..Default::default()
    })
    .await;
    std::env::set_var("PORTAL_SYNTH_TEST_KEY", "sk-test");
    let client = HttpCompleter::new(ProviderConfig {
        model: "stub-model".into(),
        temperature: 0.25,
        max_new_tokens: 77,
        api_key_env: "PORTAL_SYNTH_TEST_KEY".into(),
        ..config(&url)
    })
    .unwrap();
    let out = client
        .complete(&CompletionRequest::new("the prompt", 9).with_stop(DEFAULT_SENTINEL))
        .await
        .unwrap();
    assert_eq!(out.finish_reason, FinishReason::Length);
    let body: Value = serde_json::from_slice(&stub.bodies.lock().unwrap()[0]).unwrap();
    assert_eq!(
        body,
        json!({
            "model": "stub-model",
            "prompt": "the prompt",
            "temperature": 0.25,
            "max_tokens": 77,
            "stop": [DEFAULT_SENTINEL],
        })
    );
    assert_eq!(stub.auth.lock().unwrap()[0].as_deref(), Some("Bearer sk-test"));
}

#[tokio::test]
async fn no_key_env_sends_no_auth_header() {
    let (url, stub) = start(stub()).await;
    let client = HttpCompleter::new(config(&url)).unwrap();
    client.complete(&CompletionRequest::new("x", 0)).await.unwrap();
    assert_eq!(stub.auth.lock().unwrap()[0], None);
}

#[tokio::test]
async fn malformed_response_is_reported() {
    let app = Router::new().route("/v1/completions", post(|| async { "not json" }));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    let client = HttpCompleter::new(config(&format!("http://{addr}/v1/completions"))).unwrap();
    let err = client.complete(&CompletionRequest::new("x", 0)).await.unwrap_err();
    assert!(matches!(err, LlmError::Malformed(_)), "{err:?}");
}

#[tokio::test]
async fn concurrency_is_bounded_by_max_parallel() {
    let (url, stub) = start(Stub { delay_ms: 40, ..stub() }).await;
    let client = HttpCompleter::new(ProviderConfig {
        max_parallel: 3,
        ..config(&url)
    })
    .unwrap();
    let prompts: Vec<PromptRecord> = (0..12)
        .map(|i| PromptRecord::new(format!("p{i}"), "", "x".repeat(i + 1)).unwrap())
        .collect();
    let batch = generate_messages(&prompts, &Stage2Template::default(), None, &client, 0, "stub", "stub")
        .await
        .unwrap();
    assert_eq!(batch.corpus.len(), 12);
    assert_eq!(stub.peak.load(Ordering::SeqCst), 3);
    // outputs stay aligned with their prompts despite concurrent completion
    let lens: Vec<usize> = batch
        .corpus
        .messages()
        .iter()
        .map(|m| m.text().split(' ').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!(lens.windows(2).all(|w| w[1] == w[0] + 1), "{lens:?}");
}
