use std::sync::OnceLock;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

use trajecta::pipeline::{BuildOptions, Engine, QueryRequest};
use trajecta::service::{router, AppState};
use trajecta::synth::{generate, SynthConfig};
use trajecta::topics::LdaConfig;

const STUDENTS: &str = "Query trajectories of students during Jan. 10 2014";

fn state() -> AppState {
    static STATE: OnceLock<AppState> = OnceLock::new();
    STATE
        .get_or_init(|| {
            let config = SynthConfig {
                n_stations: 30,
                n_pois: 600,
                n_users: 40,
                ..SynthConfig::default()
            };
            let data = generate(&config).unwrap();
            let options = BuildOptions {
                lda: LdaConfig {
                    iters: 100,
                    ..LdaConfig::new(6, 0)
                },
                ..BuildOptions::default()
            };
            AppState::new(Engine::build(data.stations, data.pois, &data.records, &options).unwrap())
        })
        .clone()
}

async fn send(method: Method, uri: &str, body: Option<&str>) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri).header(header::ORIGIN, "http://localhost:5173");
    if body.is_some() {
        req = req.header(header::CONTENT_TYPE, "application/json");
    }
    let req = req.body(Body::from(body.unwrap_or("").to_string())).unwrap();
    let resp = router(state()).oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, headers, bytes)
}

async fn get_json(uri: &str) -> (StatusCode, Value) {
    let (s, _, b) = send(Method::GET, uri, None).await;
    (s, serde_json::from_slice(&b).unwrap())
}

async fn post_json(uri: &str, body: &str) -> (StatusCode, Value) {
    let (s, _, b) = send(Method::POST, uri, Some(body)).await;
    (s, serde_json::from_slice(&b).unwrap())
}

fn without_timing(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timing_ms");
    v
}

#[tokio::test]
async fn health_reports_partitions() {
    let (status, body) = get_json("/health").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert!(body["partitions"].as_u64().unwrap() > 0);
    assert!(body["trajectories"].as_u64().unwrap() > 0);
}

#[tokio::test]
async fn students_query_ranks_trajectories() {
    let (status, body) = post_json("/query", &serde_json::json!({ "sentence": STUDENTS }).to_string()).await;
    assert_eq!(status, StatusCode::OK);
    let groups = body["groups"].as_array().unwrap();
    assert_eq!(groups.len(), 1);
    assert_eq!(groups[0]["keywords"], serde_json::json!(["students"]));
    let rel: Vec<f64> = body["trajectories"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["relevance"].as_f64().unwrap())
        .collect();
    assert!(!rel.is_empty());
    assert!(rel.windows(2).all(|w| w[0] >= w[1]));
    assert!(body["timing_ms"].as_f64().unwrap() >= 0.0);
}

#[tokio::test]
async fn http_matches_library_call() {
    let (_, _, bytes) = send(Method::POST, "/query", Some(r#"{"sentence": "students during noon", "k": 5}"#)).await;
    let direct = state()
        .engine()
        .query(&QueryRequest {
            k: Some(5),
            ..QueryRequest::new("students during noon")
        })
        .unwrap();
    let direct = serde_json::to_vec(&direct).unwrap();
    // Byte comparison; only the wall-clock field may differ.
    let timing = regex::bytes::Regex::new(r#","timing_ms":[0-9.eE+-]+"#).unwrap();
    assert_eq!(timing.replace(&bytes, &b""[..]), timing.replace(&direct, &b""[..]));
}

#[tokio::test]
async fn concurrent_queries_agree() {
    let body = serde_json::json!({ "sentence": STUDENTS, "beta": 0.7 }).to_string();
    let calls = (0..8).map(|_| {
        let body = body.clone();
        tokio::spawn(async move { post_json("/query", &body).await })
    });
    let mut seen = Vec::new();
    for c in calls {
        let (status, v) = c.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        seen.push(without_timing(v));
    }
    assert!(seen.windows(2).all(|w| w[0] == w[1]));
}

#[tokio::test]
async fn empty_sentence_is_unprocessable() {
    let (status, body) = post_json("/query", r#"{"sentence": "   "}"#).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "EmptySentence");
}

#[tokio::test]
async fn wrong_topic_weight_length_is_unprocessable() {
    let (status, body) = post_json("/query", r#"{"sentence": "students", "topic_weights": [1, 0]}"#).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "TopicWeightLength");
}

#[tokio::test]
async fn malformed_json_is_bad_request() {
    let (status, body) = post_json("/query", "{not json").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "MalformedJson");
    let (status, _) = post_json("/similar", r#"{"id_a": 3}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_ids_are_not_found() {
    let (status, body) = get_json("/regions/nope").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "UnknownRegion");
    let (status, body) = get_json("/trajectories/nope").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "UnknownTrajectory");
    let (status, _) = post_json("/similar", r#"{"id_a": "nope", "id_b": "nope"}"#).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn pois_search() {
    let (status, body) = get_json("/pois?q=university%20canteen&k=3").await;
    assert_eq!(status, StatusCode::OK);
    let hits = body.as_array().unwrap();
    assert!(!hits.is_empty() && hits.len() <= 3);
    assert!(hits[0]["name"].is_string() && hits[0]["poi_id"].is_string());
    let (_, empty) = get_json("/pois?q=zzzqqq").await;
    assert_eq!(empty, serde_json::json!([]));
}

#[tokio::test]
async fn region_and_trajectory_views() {
    let engine = state().engine();
    let id = engine.index().trajectory_ids()[0].clone();
    let (status, traj) = get_json(&format!("/trajectories/{id}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(traj["trajectory_id"], id.as_str());
    let station = traj["points"][0]["station_id"].as_str().unwrap().to_string();
    assert!(traj["stopovers"].is_array());

    let (status, region) = get_json(&format!("/regions/{station}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(region["topics"].as_array().unwrap().len(), 6);
    assert!(region["polygon"].as_array().unwrap().len() >= 3);
}

#[tokio::test]
async fn similar_self_is_zero() {
    let id = state().engine().index().trajectory_ids()[1].clone();
    for ordered in [true, false] {
        let body = serde_json::json!({ "id_a": id, "id_b": id, "ordered": ordered }).to_string();
        let (status, v) = post_json("/similar", &body).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(v["cost"].as_f64().unwrap(), 0.0);
    }
    let body = serde_json::json!({ "id_a": id, "id_b": id, "w1": -1.0 }).to_string();
    let (status, v) = post_json("/similar", &body).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["error"], "NegativeWeight");
}

#[tokio::test]
async fn topics_listing() {
    let (status, body) = get_json("/topics").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["topics"].as_array().unwrap().len(), 6);
    assert_eq!(body["labels"].as_array().unwrap().len(), 6);
}

#[tokio::test]
async fn cors_allows_console_origin() {
    let (_, headers, _) = send(Method::GET, "/health", None).await;
    assert_eq!(headers[header::ACCESS_CONTROL_ALLOW_ORIGIN], "*");
    let req = Request::builder()
        .method(Method::OPTIONS)
        .uri("/query")
        .header(header::ORIGIN, "http://localhost:5173")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
        .body(Body::empty())
        .unwrap();
    let resp = router(state()).oneshot(req).await.unwrap();
    assert!(resp.status().is_success());
    assert!(resp.headers().contains_key(header::ACCESS_CONTROL_ALLOW_METHODS));
}
