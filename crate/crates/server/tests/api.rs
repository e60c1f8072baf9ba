use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use actorlens_core::store::{MemoryBackend, SteppingClock, Store};
use actorlens_core::synth::{self, Archetype, BehaviorScript};
use actorlens_server::app;

fn corpus() -> String {
    let mix = synth::parse_mix("normal=0.5,afk=0.25,feeder=0.25").unwrap();
    synth::generate_corpus(4, &mix, 11).unwrap().to_jsonl()
}

fn fresh_store() -> Arc<Store> {
    Arc::new(
        Store::with_backend(
            Box::new(MemoryBackend::default()),
            Box::new(SteppingClock::new(1_700_000_000, 1)),
        )
        .unwrap(),
    )
}

fn loaded() -> (Arc<Store>, Router) {
    let store = fresh_store();
    store.ingest_str(&corpus()).unwrap();
    let router = app(store.clone());
    (store, router)
}

async fn send(router: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let res = router.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn get(router: &Router, uri: &str) -> (StatusCode, Value) {
    let (s, b) = send(router, Request::get(uri).body(Body::empty()).unwrap()).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn post(router: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    let req = Request::post(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (s, b) = send(router, req).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

async fn new_session(router: &Router) -> String {
    let (s, v) = post(router, "/sessions", json!({"members": "all", "seed": 3})).await;
    assert_eq!(s, StatusCode::CREATED);
    v["session_id"].as_str().unwrap().to_string()
}

fn assert_error_shape(v: &Value) {
    assert!(v["code"].is_string(), "{v}");
    assert!(v["message"].is_string(), "{v}");
    assert!(v["path"].is_string(), "{v}");
}

#[tokio::test]
async fn health_is_ok() {
    let (_, r) = loaded();
    let (s, v) = get(&r, "/health").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "ok");
}

#[tokio::test]
async fn unknown_route_gets_structured_404() {
    let (_, r) = loaded();
    let (s, v) = get(&r, "/nope").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_error_shape(&v);
    assert_eq!(v["path"], "/nope");
}

#[tokio::test]
async fn ingest_raw_body_then_duplicate_is_skipped() {
    let store = fresh_store();
    let r = app(store.clone());
    let body = corpus();
    let req = || Request::post("/ingest").body(Body::from(body.clone())).unwrap();
    let (s, b) = send(&r, req()).await;
    assert_eq!(s, StatusCode::OK);
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert_eq!(v["matches"], 4);
    assert_eq!(v["player_matches"], 40);
    assert_eq!(v["skipped"], 0);
    let (_, b) = send(&r, req()).await;
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert_eq!(v["matches"], 0);
    assert_eq!(v["skipped"], 4);
}

#[tokio::test]
async fn ingest_multipart_reports_malformed_lines() {
    let store = fresh_store();
    let r = app(store.clone());
    let mut payload = corpus();
    payload.push_str("{not json}\n");
    let boundary = "XbOuNdArYx";
    let body = format!(
        "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"c.jsonl\"\r\nContent-Type: application/x-ndjson\r\n\r\n{payload}\r\n--{boundary}--\r\n"
    );
    let req = Request::post("/ingest")
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap();
    let (s, b) = send(&r, req).await;
    assert_eq!(s, StatusCode::OK);
    let v: Value = serde_json::from_slice(&b).unwrap();
    assert_eq!(v["matches"], 4);
    assert_eq!(v["skipped"], 1);
    assert_eq!(v["errors"][0]["line"], 5);
}

#[tokio::test]
async fn session_players_apply_and_persist_filters() {
    let (store, r) = loaded();
    let sid = new_session(&r).await;
    let (s, v) = get(&r, &format!("/sessions/{sid}/players")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["count"], 40);
    assert_eq!(v["histograms"].as_array().unwrap().len(), 11);
    for h in v["histograms"].as_array().unwrap() {
        let total: u64 = h["bins"].as_array().unwrap().iter().map(|b| b["count"].as_u64().unwrap()).sum();
        assert_eq!(total, 40);
    }

    let (s, v) = get(&r, &format!("/sessions/{sid}/players?filters=report_count:2:10")).await;
    assert_eq!(s, StatusCode::OK);
    let expected = store
        .members()
        .into_iter()
        .filter(|k| {
            let rc = store.derived(k).unwrap().metrics.report_count;
            (2..=10).contains(&rc)
        })
        .count();
    assert_eq!(v["count"].as_u64().unwrap() as usize, expected);
    assert_eq!(store.session(&sid).unwrap().filters.len(), 1);

    let (s, v) = get(&r, &format!("/sessions/{sid}/players?filters=bogus:0:1")).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "bad_filter");
    assert_error_shape(&v);
}

#[tokio::test]
async fn unknown_session_is_404() {
    let (_, r) = loaded();
    for uri in ["/sessions/s-9999/players", "/sessions/s-9999/projection", "/sessions/s-9999/progression"] {
        let (s, v) = get(&r, uri).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{uri}");
        assert_eq!(v["code"], "unknown_session");
    }
    let (s, _) = post(&r, "/sessions/s-9999/predict", json!({})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn create_session_rejects_unknown_members_and_bad_body() {
    let (_, r) = loaded();
    let (s, v) = post(&r, "/sessions", json!({"members": [{"match_id": "zz", "player_id": "p"}]})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "unknown_member");
    let (s, v) = post(&r, "/sessions", json!({"members": 7})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error_shape(&v);
}

#[tokio::test]
async fn projection_is_deterministic_and_separated() {
    let (_, r) = loaded();
    let sid = new_session(&r).await;
    let (s, a) = get(&r, &format!("/sessions/{sid}/projection?seed=5")).await;
    assert_eq!(s, StatusCode::OK);
    let (_, b) = get(&r, &format!("/sessions/{sid}/projection?seed=5")).await;
    assert_eq!(a, b);
    let pts: Vec<(f64, f64)> = a["points"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| (p["x"].as_f64().unwrap(), p["y"].as_f64().unwrap()))
        .collect();
    assert_eq!(pts.len(), 40);
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d = ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt();
            assert!(d >= 1.0 - 1e-9, "{i} {j} {d}");
        }
    }
}

#[tokio::test]
async fn lasso_and_progression() {
    let (store, r) = loaded();
    let sid = new_session(&r).await;
    let (s, v) = get(&r, &format!("/sessions/{sid}/progression")).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "empty_selection");

    let members: Vec<_> = store.members().into_iter().take(6).collect();
    let (s, _) = post(&r, &format!("/sessions/{sid}/lasso"), json!({"members": members})).await;
    assert_eq!(s, StatusCode::OK);
    let (s, v) = get(&r, &format!("/sessions/{sid}/progression")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["cohort"]["members"].as_array().unwrap().len(), 6);
    assert!(!v["boxes"].as_array().unwrap().is_empty());

    let first = store.derived(&members[0]).unwrap().priority;
    let (e1, e2) = (first[2].name(), first[3].name());
    let (s, v) = get(
        &r,
        &format!("/sessions/{sid}/progression?flow_minute=2&flow_from={e1}&flow_to={e2}"),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    let kept = v["cohort"]["members"].as_array().unwrap();
    assert!(kept.iter().any(|k| k["match_id"] == members[0].match_id.as_str() && k["player_id"] == members[0].player_id.as_str()));

    let (s, v) = get(&r, &format!("/sessions/{sid}/progression?mode=history")).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error_shape(&v);
    let a = &members[0];
    let (s, v) = get(
        &r,
        &format!("/sessions/{sid}/progression?mode=hero&anchor_match={}&anchor_player={}", a.match_id, a.player_id),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["cohort"]["mode"], "hero");

    let (s, v) = get(&r, &format!("/sessions/{sid}/progression?flow_minute=2")).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_error_shape(&v);
}

#[tokio::test]
async fn lasso_outside_focus_is_rejected() {
    let (store, r) = loaded();
    let focus: Vec<_> = store.members().into_iter().take(3).collect();
    let (_, v) = post(&r, "/sessions", json!({"members": focus})).await;
    let sid = v["session_id"].as_str().unwrap();
    let outside = store.members().into_iter().nth(10).unwrap();
    let (s, v) = post(&r, &format!("/sessions/{sid}/lasso"), json!({"members": [outside]})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "unknown_member");
}

#[tokio::test]
async fn match_summary_profile_and_replay() {
    let (store, r) = loaded();
    let mid = store.match_ids()[0].clone();
    let (s, v) = get(&r, &format!("/matches/{mid}/summary")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["players"].as_array().unwrap().len(), 10);
    let pid = v["players"][0]["player_id"].as_str().unwrap().to_string();

    let (s, v) = get(&r, &format!("/matches/{mid}/profile?player={pid}")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["player_id"], pid.as_str());

    let (s, v) = get(&r, &format!("/matches/{mid}/replay?player={pid}&from_s=60&to_s=120")).await;
    assert_eq!(s, StatusCode::OK);
    for t in v["trajectories"].as_array().unwrap() {
        for sample in t["samples"].as_array().unwrap() {
            let ts = sample["t"].as_f64().unwrap();
            assert!((60.0..=120.0).contains(&ts));
        }
    }

    let (s, v) = get(&r, &format!("/matches/{mid}/replay?player={pid}&from_s=120&to_s=60")).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "bad_window");
    let (s, v) = get(&r, &format!("/matches/{mid}/replay?player=ghost")).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_error_shape(&v);
    let (s, v) = get(&r, &format!("/matches/{mid}/replay")).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["path"], "player");
    let (s, v) = get(&r, "/matches/none/summary").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "unknown_match");
}

#[tokio::test]
async fn labels_roundtrip_and_export() {
    let (store, r) = loaded();
    let k = store.members()[0].clone();
    let (s, v) = post(&r, "/labels", json!({"match_id": k.match_id, "player_id": k.player_id, "label": "actor"})).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["source"], "human");
    assert_eq!(v["created_at"], "2023-11-14T22:13:20Z");

    let (s, v) = post(&r, "/labels", json!({"match_id": k.match_id, "player_id": k.player_id, "label": "maybe"})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["path"], "label");
    let (s, v) = post(&r, "/labels", json!({"match_id": "x", "player_id": "y", "label": "normal"})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "unknown_member");

    let (s, v) = get(&r, "/labels?source=human").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v.as_array().unwrap().len(), 1);
    let (s, v) = get(&r, "/labels?source=model").await;
    assert_eq!(s, StatusCode::OK);
    assert!(v.as_array().unwrap().is_empty());
    let (s, _) = get(&r, "/labels?source=robot").await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    let (s, body) = send(&r, Request::get("/labels/export.csv").body(Body::empty()).unwrap()).await;
    assert_eq!(s, StatusCode::OK);
    let text = String::from_utf8(body).unwrap();
    assert!(text.lines().count() >= 2);
    assert!(text.contains(&k.player_id));
}

#[tokio::test]
async fn predict_needs_labels_then_succeeds() {
    let (store, r) = loaded();
    let sid = new_session(&r).await;
    let (s, v) = post(&r, &format!("/sessions/{sid}/predict"), json!({})).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["code"], "insufficient_labels");

    let members = store.members();
    for (i, k) in members.iter().take(6).enumerate() {
        let label = if i < 3 { "actor" } else { "normal" };
        let (s, _) = post(&r, "/labels", json!({"match_id": k.match_id, "player_id": k.player_id, "label": label})).await;
        assert_eq!(s, StatusCode::CREATED);
    }
    let (s, v) = post(&r, &format!("/sessions/{sid}/predict"), json!({})).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let preds = v["predictions"].as_array().unwrap();
    assert_eq!(preds.len(), 34);
    for p in preds {
        let c = p["confidence"].as_f64().unwrap();
        assert!((0.5..=1.0).contains(&c));
        assert_eq!(p["source"], "model");
    }
}

#[tokio::test]
async fn concurrent_predict_is_rejected() {
    let (store, r) = loaded();
    let sid = new_session(&r).await;
    let guard = store.begin_predict(&sid).unwrap();
    let (s, v) = post(&r, &format!("/sessions/{sid}/predict"), json!({})).await;
    assert_eq!(s, StatusCode::TOO_MANY_REQUESTS);
    assert_error_shape(&v);
    drop(guard);
    let (s, _) = post(&r, &format!("/sessions/{sid}/predict"), json!({})).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn small_filtered_projection_is_empty_not_an_error() {
    let store = fresh_store();
    let scripts: Vec<BehaviorScript> = (0..10).map(|i| BehaviorScript::new(Archetype::NormalLaner, i)).collect();
    let (m, _) = synth::generate_match(&scripts, 900, 4).unwrap();
    store.ingest_str(&actorlens_core::telemetry::serialize_match(&m)).unwrap();
    let r = app(store);
    let sid = new_session(&r).await;
    let (s, v) = get(&r, &format!("/sessions/{sid}/projection?seed=1")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["points"].as_array().unwrap().len(), 10);
    get(&r, &format!("/sessions/{sid}/players?filters=report_count:100:200")).await;
    let (s, v) = get(&r, &format!("/sessions/{sid}/projection")).await;
    assert_eq!(s, StatusCode::OK);
    assert!(v["points"].as_array().unwrap().is_empty());
}
