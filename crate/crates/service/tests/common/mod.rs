#![allow(dead_code)]

use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use patterncraft_eval::corpus::{make_synthetic_corpus, Corpus, CorpusSpec};
use patterncraft_service::{router, AppState, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

pub fn app(dir: &std::path::Path) -> Router {
    router(AppState::open(ServiceConfig::new(dir)).unwrap())
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

pub async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(app, Method::POST, uri, Some(body)).await
}

pub async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Method::GET, uri, None).await
}

pub async fn session(app: &Router) -> String {
    let (status, body) = call(app, Method::POST, "/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    body["id"].as_str().unwrap().to_string()
}

fn rank(state: &str) -> u8 {
    match state {
        "queued" => 0,
        "running" => 1,
        "done" | "failed" => 2,
        other => panic!("unknown state {other}"),
    }
}

/// Poll a job to completion, checking that its state never moves back.
pub async fn wait(app: &Router, sid: &str, job: &Value) -> Value {
    let jid = job["id"].as_str().unwrap();
    let mut last = rank(job["state"].as_str().unwrap());
    for _ in 0..12_000 {
        let (status, j) = get(app, &format!("/sessions/{sid}/jobs/{jid}")).await;
        assert_eq!(status, StatusCode::OK);
        let r = rank(j["state"].as_str().unwrap());
        assert!(r >= last, "job state went back: {j}");
        last = r;
        if r == 2 {
            return j;
        }
        tokio::time::sleep(Duration::from_millis(25)).await;
    }
    panic!("job {jid} did not finish");
}

pub async fn wait_done(app: &Router, sid: &str, job: &Value) -> Value {
    let j = wait(app, sid, job).await;
    assert_eq!(j["state"], "done", "{j}");
    j
}

pub fn corpus() -> Corpus {
    make_synthetic_corpus(&CorpusSpec::named("small").unwrap(), 5).unwrap()
}

/// Upload the corpus levels under their own ids, its vocabulary and its
/// annotations.
pub async fn load_corpus(app: &Router, sid: &str, corpus: &Corpus) {
    for level in &corpus.levels {
        let (status, body) =
            post(app, &format!("/sessions/{sid}/levels"), json!({ "id": level.id, "tiles": level.grid.rows() })).await;
        assert_eq!(status, StatusCode::OK, "{body}");
    }
    let (status, body) =
        call(app, Method::PUT, &format!("/sessions/{sid}/vocabulary"), Some(json!({ "labels": corpus.vocabulary.names() })))
            .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let (status, body) =
        post(app, &format!("/sessions/{sid}/annotations"), json!({ "annotations": corpus.annotations })).await;
    assert_eq!(status, StatusCode::OK, "{body}");
}
