mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use claim_match_service::{router, Service, ServiceConfig};
use common::BandProvider;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

const TOKEN: &str = "s3cret";

fn app(dir: &std::path::Path) -> axum::Router {
    let service = Service::open(ServiceConfig::new(dir), Arc::new(BandProvider::default())).unwrap();
    router(Arc::new(service), Some(TOKEN.to_string()))
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri).header(header::AUTHORIZATION, format!("Bearer {TOKEN}"));
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

async fn submit(app: &axum::Router, text: &str) -> Value {
    let (status, v) = call(app, "POST", "/v1/messages", Some(json!({"text": text, "language": "en", "source": "tipline"}))).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v
}

#[tokio::test]
async fn bands_reviews_and_clusters() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());

    let first = submit(&app, "claim1 v0 the photo is fake").await;
    assert_eq!(first["decision"], "new_claim");
    assert_eq!(first["message_id"], "m0");

    let dup = submit(&app, "claim1 v0 the photo is fake").await;
    assert_eq!(dup["decision"], "auto_matched");
    assert_eq!(dup["attached_cluster"], first["cluster"]);

    let near = submit(&app, "claim1 v2 photo doctored").await;
    assert_eq!(near["decision"], "suggested");
    let sugg = near["suggestions"].as_array().unwrap();
    assert_eq!(sugg.len(), 2);
    assert!((sugg[0]["cosine"].as_f64().unwrap() - 0.925).abs() < 1e-5);

    let other = submit(&app, "claim2 v0 unrelated rumour").await;
    assert_eq!(other["decision"], "new_claim");

    let (_, pending) = call(&app, "GET", "/v1/reviews?state=pending", None).await;
    let pending = pending.as_array().unwrap();
    assert_eq!(pending.len(), 2);
    assert_eq!(pending[0]["query_text"], "claim1 v2 photo doctored");
    let rid = pending[0]["id"].as_u64().unwrap();

    let (status, item) = call(&app, "POST", &format!("/v1/reviews/{rid}"), Some(json!({"verdict": "confirm", "reviewer": "r1"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(item["state"], "confirmed");
    assert_eq!(item["resolved_by"], "r1");

    let (status, err) = call(&app, "POST", &format!("/v1/reviews/{rid}"), Some(json!({"verdict": "reject"}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error"], "already_resolved");

    let (_, clusters) = call(&app, "GET", "/v1/clusters?min_size=2", None).await;
    let clusters = clusters.as_array().unwrap();
    assert_eq!(clusters.len(), 1);
    assert_eq!(clusters[0]["members"], json!(["m0", "m1", "m2"]));

    let cid = clusters[0]["id"].as_u64().unwrap();
    let (status, detail) = call(&app, "GET", &format!("/v1/clusters/{cid}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(detail["size"], 3);
    assert!(detail["representatives"]["medoid"].is_string());

    let (status, m) = call(&app, "POST", "/v1/matches", Some(json!({"id_a": "m3", "id_b": "m0"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(m["cluster"], cid);
    let (_, again) = call(&app, "POST", "/v1/matches", Some(json!({"id_a": "m3", "id_b": "m1"}))).await;
    assert_eq!(again["cluster"], cid);

    let (status, err) = call(&app, "POST", "/v1/matches", Some(json!({"id_a": "m3", "id_b": "m99"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["error"], "unknown_message");
}

#[tokio::test]
async fn preview_stores_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    submit(&app, "claim5 v0 base").await;
    let (status, v) = call(&app, "POST", "/v1/messages?preview=true", Some(json!({"text": "claim5 v2 near"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["decision"], "suggested");
    assert!(v["message_id"].is_null());
    assert!(v["suggestions"][0]["review_id"].is_null());
    let (_, h) = call(&app, "GET", "/v1/health", None).await;
    assert_eq!(h["messages"], 1);
    assert_eq!(h["pending_reviews"], 0);
}

#[tokio::test]
async fn errors_and_auth() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());

    let (status, err) = call(&app, "POST", "/v1/messages", Some(json!({"text": "  +91 98765 43210 "}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["error"], "empty_text");

    let (status, err) = call(&app, "POST", "/v1/messages", Some(json!({"text": "claim3 offline"}))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert!(err["detail"].as_str().unwrap().contains("m0"));

    let (status, _) = call(&app, "POST", "/v1/reviews/42", Some(json!({"verdict": "confirm"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "GET", "/v1/clusters/7", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "GET", "/v1/reviews?state=bogus", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let req = Request::builder().uri("/v1/clusters").body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::UNAUTHORIZED);
    let req = Request::builder().uri("/v1/health").body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);

    let (_, h) = call(&app, "GET", "/v1/health", None).await;
    assert_eq!(h["queued"], 1);
    // next accepted message does not reuse the queued id
    let (status, v) = call(&app, "POST", "/v1/messages", Some(json!({"text": "claim3 v0"}))).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(v["message_id"], "m1");
}
