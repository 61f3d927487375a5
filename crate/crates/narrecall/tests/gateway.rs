//! Gateway against a local HTTP server with scripted responses.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use narrecall::clock::SteppingClock;
use narrecall::gateway::{
    read_audit, AuditLog, Backoff, ChatProvider, Gateway, GatewayError, HttpChat, HttpEmbedder,
    NoSleep, ReplayProvider, UreqTransport,
};
use narrecall_core::similarity::{EmbedError, Embedder};
use narrecall_core::PromptKind;

#[derive(Debug, Clone)]
struct Seen {
    path: String,
    authorization: Option<String>,
    body: String,
}

/// Serves one scripted `(status, body)` per connection, then stops.
fn server(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in script {
            let Ok((stream, _)) = listener.accept() else {
                return;
            };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let path = line
                .split_whitespace()
                .nth(1)
                .unwrap_or_default()
                .to_string();
            let (mut len, mut auth) = (0usize, None);
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                let h = h.trim_end();
                if h.is_empty() {
                    break;
                }
                let (k, v) = h.split_once(':').unwrap();
                match k.to_ascii_lowercase().as_str() {
                    "content-length" => len = v.trim().parse().unwrap(),
                    "authorization" => auth = Some(v.trim().to_string()),
                    _ => {}
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen {
                path,
                authorization: auth,
                body: String::from_utf8(buf).unwrap(),
            });
            let mut stream = stream;
            let resp = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(resp.as_bytes()).unwrap();
        }
    });
    (format!("http://{addr}/v1"), seen)
}

fn chat_ok(text: &str) -> String {
    serde_json::json!({
        "id": "c1",
        "model": "gpt-test",
        "choices": [{"finish_reason": "stop", "message": {"role": "assistant", "content": text}}],
    })
    .to_string()
}

fn chat(endpoint: &str) -> HttpChat {
    let transport = Arc::new(UreqTransport::new(Duration::from_secs(10)));
    HttpChat::new(transport, endpoint, Some("sk-test".into()), "gpt-test")
        .with_backoff(Backoff::default(), Arc::new(NoSleep))
}

fn gateway(p: HttpChat, max_retries: u32) -> Gateway {
    Gateway::new(
        Box::new(p),
        Arc::new(SteppingClock::fixed()),
        2,
        max_retries,
    )
}

#[test]
fn two_failures_then_success_within_three_retries() {
    let (url, seen) = server(vec![
        (500, "{}".into()),
        (503, "{}".into()),
        (200, chat_ok("1. One.\n2. Two.")),
    ]);
    let g = gateway(chat(&url), 3);
    let c = g
        .complete(PromptKind::RecallSegmentation, "Split this.".into())
        .unwrap();
    assert_eq!(c.raw_text, "1. One.\n2. Two.");
    assert_eq!(c.provider_meta["model"], "gpt-test");
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    assert!(seen.iter().all(|s| s.path == "/v1/chat/completions"));
    assert_eq!(seen[0].authorization.as_deref(), Some("Bearer sk-test"));
    let body: serde_json::Value = serde_json::from_str(&seen[2].body).unwrap();
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["content"], "Split this.");
}

#[test]
fn persistent_rate_limit_fails_after_retry_budget() {
    let (url, seen) = server(vec![(429, "{}".into()); 5]);
    let g = gateway(chat(&url), 2);
    let err = g
        .complete(PromptKind::RecallScoring, "Score.".into())
        .unwrap_err();
    assert!(
        matches!(err, GatewayError::Transport { attempts: 3, .. }),
        "{err:?}"
    );
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn client_error_is_not_retried() {
    let (url, seen) = server(vec![
        (400, r#"{"error":"bad"}"#.into()),
        (200, chat_ok("x")),
    ]);
    let err = gateway(chat(&url), 3)
        .complete(PromptKind::RecallScoring, "Score.".into())
        .unwrap_err();
    assert!(
        matches!(err, GatewayError::Rejected { status: 400, .. }),
        "{err:?}"
    );
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn content_filter_is_reported_distinctly() {
    let body = serde_json::json!({"choices": [{"finish_reason": "content_filter", "message": {"content": ""}}]});
    let (url, _) = server(vec![(200, body.to_string())]);
    let err = gateway(chat(&url), 0)
        .complete(PromptKind::RecallScoring, "Score.".into())
        .unwrap_err();
    assert!(matches!(err, GatewayError::Content(_)), "{err:?}");
}

#[test]
fn embedder_reads_vector_and_checks_input() {
    let body = serde_json::json!({"data": [{"embedding": [0.5, -1.0, 2.0]}]});
    let (url, seen) = server(vec![(200, body.to_string())]);
    let transport = Arc::new(UreqTransport::new(Duration::from_secs(10)));
    let e = HttpEmbedder::new(transport, &url, None, "embed-test", 1, 10)
        .with_backoff(Backoff::default(), Arc::new(NoSleep));
    let v = e.embed("hello").unwrap();
    assert_eq!(v.values, vec![0.5, -1.0, 2.0]);
    assert_eq!(v.model_id, "embed-test");
    assert_eq!(seen.lock().unwrap()[0].path, "/v1/embeddings");
    assert_eq!(e.embed("  "), Err(EmbedError::EmptyInput));
    assert!(matches!(
        e.embed("far too long for it"),
        Err(EmbedError::TooLong { .. })
    ));
}

#[test]
fn audit_log_replays_identically() {
    let dir = tempfile::tempdir().unwrap();
    let audit = dir.path().join("audit.jsonl");
    let (url, _) = server(vec![(200, chat_ok("first")), (200, chat_ok("second"))]);
    let g = gateway(chat(&url), 0).with_audit(AuditLog::open(&audit).unwrap());
    let a = g.complete(PromptKind::RecallScoring, "p1".into()).unwrap();
    let b = g.complete(PromptKind::OrderedScoring, "p2".into()).unwrap();
    drop(g);

    let records = read_audit(&audit).unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0].model, "gpt-test");
    let replay = ReplayProvider::from_records(records);
    assert_eq!(replay.model_id(), "gpt-test");
    let g = Gateway::new(Box::new(replay), Arc::new(SteppingClock::fixed()), 1, 0);
    assert_eq!(
        g.complete(PromptKind::RecallScoring, "p1".into())
            .unwrap()
            .raw_text,
        a.raw_text
    );
    assert_eq!(
        g.complete(PromptKind::OrderedScoring, "p2".into())
            .unwrap()
            .raw_text,
        b.raw_text
    );
    let miss = g
        .complete(PromptKind::RecallScoring, "p3".into())
        .unwrap_err();
    assert!(matches!(miss, GatewayError::ReplayMiss { .. }), "{miss:?}");
}
