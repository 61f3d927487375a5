//! Experiment service over its HTTP interface.

mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use narrecall::clock::SteppingClock;
use narrecall::io::Corpus;
use narrecall::service::{read_event_log, router, ExperimentService, EVENT_LOG};
use narrecall_core::session::replay;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Harness {
    _dir: tempfile::TempDir,
    data: std::path::PathBuf,
    svc: Arc<ExperimentService>,
}

impl Harness {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("data");
        let cfg = common::write_config(dir.path());
        assert_eq!(common::cli(&cfg, &data, &["lures", "boyscout"]), 0);
        let svc = Self::open(&data);
        Self {
            _dir: dir,
            data,
            svc,
        }
    }

    fn open(data: &std::path::Path) -> Arc<ExperimentService> {
        let corpus = Corpus::load(&[&common::fixtures(), data]).unwrap();
        Arc::new(
            ExperimentService::open(corpus, data, Arc::new(SteppingClock::fixed()), 7).unwrap(),
        )
    }

    async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let mut req = Request::builder().method(method).uri(uri);
        let body = match body {
            Some(b) => {
                req = req.header("content-type", "application/json");
                Body::from(b.to_string())
            }
            None => Body::empty(),
        };
        let resp = router(self.svc.clone())
            .oneshot(req.body(body).unwrap())
            .await
            .unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let v = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap()
        };
        (status, v)
    }

    async fn create(&self, pid: &str, nid: &str, task: &str) -> String {
        let (s, v) = self
            .call(
                "POST",
                "/sessions",
                Some(json!({"participant_id": pid, "narrative_id": nid, "task": task})),
            )
            .await;
        assert_eq!(s, StatusCode::CREATED, "{v}");
        v["session_id"].as_str().unwrap().to_string()
    }

    async fn present(&self, id: &str) -> Value {
        assert_eq!(
            self.call("POST", &format!("/sessions/{id}/consent"), None)
                .await
                .0,
            StatusCode::OK
        );
        let (s, stim) = self
            .call("GET", &format!("/sessions/{id}/stimulus"), None)
            .await;
        assert_eq!(s, StatusCode::OK);
        let (s, ack) = self
            .call(
                "POST",
                &format!("/sessions/{id}/presentation-finished"),
                Some(json!({"elapsed_s": 60.0})),
            )
            .await;
        assert_eq!(s, StatusCode::OK, "{ack}");
        stim
    }
}

#[tokio::test]
async fn recognition_session_end_to_end() {
    let h = Harness::new();
    assert_eq!(h.call("GET", "/health", None).await.1["status"], "ok");
    let id = h.create("p01", "boyscout", "recognition").await;
    let stim = h.present(&id).await;
    assert_eq!(stim["font_color"], "black");
    assert_eq!(stim["background_color"], "white");
    assert!(stim["char_count"].as_u64().unwrap() > 100);

    let mut served = 0;
    loop {
        let (s, p) = h
            .call("GET", &format!("/sessions/{id}/probes/next"), None)
            .await;
        assert_eq!(s, StatusCode::OK);
        if p["status"] == "done" {
            break;
        }
        let pos = p["position"].as_u64().unwrap();
        served += 1;
        assert_eq!(pos, served);
        let (s, ack) = h
            .call(
                "POST",
                &format!("/sessions/{id}/probes/{pos}/answer"),
                Some(json!({"response_yes": pos % 2 == 0})),
            )
            .await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(ack["completed"], pos == 10);
    }
    assert_eq!(served, 10);
    let (_, view) = h.call("GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(view["state"], "completed");
    assert_eq!(view["probes_answered"], 10);

    let (_, export) = h.call("GET", "/export?filter=task:recognition", None).await;
    let trials = export["recognition"].as_array().unwrap();
    assert_eq!(trials.len(), 10);
    let old = trials.iter().filter(|t| t["is_old"] == true).count();
    let new = trials.iter().filter(|t| t["is_old"] == false).count();
    assert_eq!(old + new, 10);
}

#[tokio::test]
async fn recall_submission_is_idempotent_and_conflicts_are_rejected() {
    let h = Harness::new();
    let id = h.create("p02", "boyscout", "recall").await;
    h.present(&id).await;
    let uri = format!("/sessions/{id}/recall");
    let (s, a) = h
        .call("POST", &uri, Some(json!({"text": "A boy had cramps."})))
        .await;
    assert_eq!(s, StatusCode::OK);
    let (s, b) = h
        .call("POST", &uri, Some(json!({"text": "A boy had cramps."})))
        .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(a["token"], b["token"]);
    let (s, e) = h
        .call("POST", &uri, Some(json!({"text": "Something else."})))
        .await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(e["error"], "conflict");

    let (_, export) = h.call("GET", "/export", None).await;
    assert_eq!(export["recalls"][0]["recall_text"], "A boy had cramps.");
}

#[tokio::test]
async fn errors_map_to_statuses() {
    let h = Harness::new();
    let (s, e) = h.call("GET", "/sessions/nope", None).await;
    assert_eq!(
        (s, e["error"].as_str()),
        (StatusCode::NOT_FOUND, Some("not_found"))
    );
    let (s, _) = h
        .call(
            "POST",
            "/sessions",
            Some(json!({"participant_id": "p", "narrative_id": "missing", "task": "recall"})),
        )
        .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    // No lure pool exists for this narrative.
    let (s, e) = h
        .call("POST", "/sessions", Some(json!({"participant_id": "p", "narrative_id": "triplett-v2", "task": "recognition"})))
        .await;
    assert_eq!(
        (s, e["error"].as_str()),
        (StatusCode::UNPROCESSABLE_ENTITY, Some("configuration"))
    );

    let id = h.create("p03", "boyscout", "recall").await;
    let (s, e) = h
        .call("GET", &format!("/sessions/{id}/stimulus"), None)
        .await;
    assert_eq!(
        (s, e["error"].as_str()),
        (StatusCode::CONFLICT, Some("state"))
    );
    h.present(&id).await;
    let (s, _) = h
        .call("GET", &format!("/sessions/{id}/probes/next"), None)
        .await;
    assert_eq!(s, StatusCode::CONFLICT);

    let rid = h.create("p04", "boyscout", "recognition").await;
    h.present(&rid).await;
    let (s, e) = h
        .call(
            "POST",
            &format!("/sessions/{rid}/probes/3/answer"),
            Some(json!({"response_yes": true})),
        )
        .await;
    assert_eq!(s, StatusCode::CONFLICT, "{e}");
    let (s, _) = h.call("GET", "/export?filter=colour:red", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn restart_replays_the_event_log() {
    let h = Harness::new();
    let a = h.create("p05", "boyscout", "recognition").await;
    h.present(&a).await;
    h.call("GET", &format!("/sessions/{a}/probes/next"), None)
        .await;
    h.call(
        "POST",
        &format!("/sessions/{a}/probes/1/answer"),
        Some(json!({"response_yes": true})),
    )
    .await;
    let b = h.create("p06", "boyscout", "recall").await;
    h.present(&b).await;
    let before = h.svc.snapshot();

    let reopened = Harness::open(&h.data);
    assert_eq!(reopened.snapshot(), before);
    let records = read_event_log(&h.data.join(EVENT_LOG)).unwrap();
    assert_eq!(replay(&records).unwrap(), before);
    // Sequence numbers continue after a restart.
    let c = reopened
        .create_session("p07", "boyscout", narrecall_core::session::Task::Recall)
        .unwrap();
    assert_ne!(c.session_id, a);
    assert_ne!(c.session_id, b);
}
