mod common;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use hscn_core::author::{batch_generate, generate_for_hs, Author, AuthorBackend, BatchOptions, GenerationRequest};
use hscn_core::corpus::{MarkerFormat, Origin, PairId};
use hscn_core::Error;
use serde_json::json;

#[derive(Default)]
struct Mock {
    attempts: Mutex<HashMap<String, usize>>,
}

async fn generate(State(mock): State<Arc<Mock>>, Json(req): Json<GenerationRequest>) -> Response {
    let hs = req
        .condition_hs(&MarkerFormat::default())
        .unwrap_or_default()
        .to_owned();
    let attempt = {
        let mut a = mock.attempts.lock().unwrap();
        let n = a.entry(hs.clone()).or_default();
        *n += 1;
        *n
    };
    if hs.contains("FAIL") {
        return (StatusCode::BAD_REQUEST, "rejected").into_response();
    }
    if hs.contains("FLAKY") && attempt == 1 {
        return (StatusCode::SERVICE_UNAVAILABLE, "warming up").into_response();
    }
    if hs.contains("DOWN") {
        return (StatusCode::INTERNAL_SERVER_ERROR, "down").into_response();
    }
    if hs.contains("GARBAGE") {
        return (StatusCode::OK, "not json").into_response();
    }
    if hs.contains("SLOW") {
        tokio::time::sleep(Duration::from_millis(600)).await;
    }
    if hs.contains("ECHO") {
        return Json(json!({ "texts": [format!("{hs} <|endCN|>")] })).into_response();
    }
    let text = format!(
        "Reply to {hs} <|endCN|> <|HS|> Another hateful claim. <|endHS|> <|CN|> Another answer. <|endCN|> <|HS|> cut"
    );
    Json(json!({ "texts": [text] })).into_response()
}

async fn spawn_mock() -> (SocketAddr, Arc<Mock>) {
    let mock = Arc::new(Mock::default());
    let app = Router::new().route("/generate", post(generate)).with_state(mock.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (addr, mock)
}

fn remote(addr: SocketAddr, timeout_ms: u64, retries: u32) -> Author {
    let backend = AuthorBackend {
        timeout_ms,
        retries,
        ..AuthorBackend::remote(format!("http://{addr}/generate"))
    };
    Author::from_backend(&backend).unwrap()
}

async fn one(author: &Author, hs: &str) -> hscn_core::Result<hscn_core::author::Generation> {
    generate_for_hs(hs, author, &GenerationRequest::default(), &PairId::new("x"), common::fixed_time()).await
}

#[tokio::test]
async fn one_failure_in_a_hundred_is_recorded() {
    let (addr, _) = spawn_mock().await;
    let author = remote(addr, 2_000, 1);
    let hs: Vec<String> = (0..100)
        .map(|i| if i == 37 { "FAIL this one".to_owned() } else { format!("Hateful claim {i}") })
        .collect();
    let batch = batch_generate(&hs, &author, &GenerationRequest::default(), &BatchOptions::new("r")).await;
    assert_eq!(batch.report.requested, 100);
    assert_eq!(batch.report.succeeded, 99);
    assert_eq!(batch.report.failures.len(), 1);
    assert_eq!(batch.report.failures[0].index, 37);
    assert_eq!(batch.report.failures[0].code, "backend_error");
    assert_eq!(batch.report.harvested, 99);
    assert_eq!(batch.report.fragments, 99);
    let primaries: Vec<_> = batch.pool.iter().filter(|p| p.origin == Some(Origin::Conditioned)).collect();
    assert_eq!(primaries.len(), 99);
    assert_eq!(primaries[0].id, PairId::new("r0"));
    assert_eq!(primaries[0].counter_narrative, "Reply to Hateful claim 0");
    assert!(batch.pool.iter().any(|p| p.id == PairId::new("r0.1")));
    assert!(!batch.pool.iter().any(|p| p.id == PairId::new("r37")));
}

#[tokio::test]
async fn server_errors_are_retried() {
    let (addr, mock) = spawn_mock().await;
    let g = one(&remote(addr, 2_000, 2), "FLAKY claim").await.unwrap();
    assert_eq!(g.primary.counter_narrative, "Reply to FLAKY claim");
    assert_eq!(mock.attempts.lock().unwrap()["FLAKY claim"], 2);
}

#[tokio::test]
async fn retries_are_bounded() {
    let (addr, mock) = spawn_mock().await;
    let err = one(&remote(addr, 2_000, 2), "DOWN claim").await.unwrap_err();
    assert!(matches!(err, Error::Backend(_)), "{err}");
    assert_eq!(mock.attempts.lock().unwrap()["DOWN claim"], 3);
}

#[tokio::test]
async fn client_errors_are_not_retried() {
    let (addr, mock) = spawn_mock().await;
    assert!(one(&remote(addr, 2_000, 3), "FAIL now").await.is_err());
    assert_eq!(mock.attempts.lock().unwrap()["FAIL now"], 1);
}

#[tokio::test]
async fn malformed_body_is_reported() {
    let (addr, _) = spawn_mock().await;
    let err = one(&remote(addr, 2_000, 0), "GARBAGE please").await.unwrap_err();
    assert!(matches!(err, Error::MalformedResponse(_)), "{err}");
}

#[tokio::test]
async fn echo_only_output_is_malformed() {
    let (addr, _) = spawn_mock().await;
    let err = one(&remote(addr, 2_000, 0), "ECHO me").await.unwrap_err();
    assert!(matches!(err, Error::MalformedOutput { .. }), "{err}");
}

#[tokio::test]
async fn slow_backend_times_out() {
    let (addr, mock) = spawn_mock().await;
    let err = one(&remote(addr, 100, 1), "SLOW claim").await.unwrap_err();
    assert!(matches!(err, Error::BackendTimeout { attempts: 2 }), "{err}");
    assert_eq!(mock.attempts.lock().unwrap()["SLOW claim"], 2);
}

#[tokio::test]
async fn health_probe() {
    let (addr, _) = spawn_mock().await;
    remote(addr, 2_000, 0).health_probe().await.unwrap();

    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let closed = listener.local_addr().unwrap();
    drop(listener);
    let err = remote(closed, 200, 0).health_probe().await.unwrap_err();
    assert!(matches!(err, Error::Unhealthy(_)), "{err}");
}

#[tokio::test]
async fn stub_batches_are_order_independent() {
    let author = Author::from_backend(&AuthorBackend::stub(5)).unwrap();
    let hs: Vec<String> = common::HS.iter().map(|s| s.to_string()).collect();
    let mut reversed = hs.clone();
    reversed.reverse();
    let opts = BatchOptions {
        created_at: common::fixed_time(),
        ..BatchOptions::new("s")
    };
    let a = batch_generate(&hs, &author, &GenerationRequest::default(), &opts).await;
    let b = batch_generate(&reversed, &author, &GenerationRequest::default(), &opts).await;
    assert_eq!(a.report.failures.len(), 0);
    for pair in a.pool.iter().filter(|p| p.origin == Some(Origin::Conditioned)) {
        let twin = b
            .pool
            .iter()
            .find(|q| q.origin == Some(Origin::Conditioned) && q.hate_speech == pair.hate_speech)
            .unwrap();
        assert_eq!(twin.counter_narrative, pair.counter_narrative);
    }
}
