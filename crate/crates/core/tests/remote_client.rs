mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use siftrank::rankers::{BatchRanker, ChatClient, LlmRanker, RankerError, RemoteConfig, TextModel};
use siftrank::{run_ranking, BatchFailure, Document, RankConfig, RankError};

fn client(base: &str) -> ChatClient {
    ChatClient::new(RemoteConfig::new(base, "test-model", "sk-test")).unwrap()
}

/// Ranks by the number in each document's text, lowest first.
fn numeric_ranker(req: &common::Request) -> (u16, String) {
    if req.path.ends_with("/models") {
        return (200, "{\"data\": []}".into());
    }
    let mut docs = common::prompt_documents(&req.body);
    docs.sort_by_key(|(_, t)| t.trim_start_matches("doc ").parse::<u32>().unwrap());
    let keys: Vec<&str> = docs.iter().map(|(k, _)| k.as_str()).collect();
    let content = serde_json::json!({ "keys": keys }).to_string();
    (200, common::completion(&content, 100, 7))
}

#[test]
fn end_to_end_over_http() {
    let server = common::serve(numeric_ranker);
    let docs: Vec<Document> = (0..40).map(|i| Document::new(format!("id{i}"), format!("doc {}", (i * 17) % 40), i)).collect();
    let ranker = LlmRanker::new(client(&server.base_url));
    let config = RankConfig { concurrency_cap: 4, ..RankConfig::default() };
    let out = run_ranking(&docs, "smallest number", &config, &ranker).unwrap();
    let best = docs.iter().find(|d| d.text == "doc 0").unwrap();
    assert_eq!(out.ranked[0].id, best.id);
    assert_eq!(out.usage.requests, server.hits.load(Ordering::SeqCst) as u64);
    assert_eq!(out.usage.input_tokens, 100 * out.usage.requests);
    assert_eq!(out.usage.output_tokens, 7 * out.usage.requests);
}

#[test]
fn request_shape_and_auth_header() {
    let seen = Arc::new(std::sync::Mutex::new(None));
    let store = seen.clone();
    let server = common::serve(move |req| {
        *store.lock().unwrap() = Some((req.method.clone(), req.path.clone(), req.authorization.clone(), req.body.clone()));
        (200, common::completion("hello", 1, 1))
    });
    let mut config = RemoteConfig::new(format!("{}/v1/", server.base_url), "m1", "sk-abc");
    config.reasoning_effort = Some("minimal".into());
    config.temperature = Some(0.0);
    let c = ChatClient::new(config).unwrap();
    let prompt = siftrank::rankers::ChatPrompt { system: "s".into(), user: "u".into() };
    assert_eq!(c.complete(&prompt).unwrap().text, "hello");
    let (method, path, auth, body) = seen.lock().unwrap().clone().unwrap();
    assert_eq!((method.as_str(), path.as_str()), ("POST", "/v1/chat/completions"));
    assert_eq!(auth.as_deref(), Some("Bearer sk-abc"));
    let v: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["model"], "m1");
    assert_eq!(v["reasoning_effort"], "minimal");
    assert_eq!(v["messages"][0]["role"], "system");
    assert_eq!(c.ledger().totals().requests, 1);
}

#[test]
fn auth_check_distinguishes_rejection() {
    let ok = common::serve(|_| (200, "{}".into()));
    assert!(client(&ok.base_url).check_auth().is_ok());
    let missing = common::serve(|_| (404, "{}".into()));
    assert!(client(&missing.base_url).check_auth().is_ok());
    let denied = common::serve(|_| (401, "{\"error\": \"bad key\"}".into()));
    assert!(matches!(client(&denied.base_url).check_auth(), Err(RankerError::Auth { status: 401, .. })));
}

#[test]
fn status_errors_classified() {
    let server = common::serve(|_| (429, "slow down".into()));
    let err = client(&server.base_url)
        .complete(&siftrank::rankers::ChatPrompt { system: String::new(), user: String::new() })
        .unwrap_err();
    assert!(matches!(err, RankerError::Status { status: 429, .. }));
    assert!(err.is_retryable());
    let server = common::serve(|_| (400, "bad".into()));
    let err = client(&server.base_url)
        .complete(&siftrank::rankers::ChatPrompt { system: String::new(), user: String::new() })
        .unwrap_err();
    assert!(!err.is_retryable());
}

#[test]
fn server_errors_are_retried_then_abort() {
    let calls = Arc::new(AtomicUsize::new(0));
    let counter = calls.clone();
    let server = common::serve(move |_| {
        counter.fetch_add(1, Ordering::SeqCst);
        (503, "unavailable".into())
    });
    let ranker = LlmRanker::new(client(&server.base_url)).with_backoff(Duration::from_millis(1), Duration::from_millis(2));
    let docs: Vec<Document> = (0..5).map(|i| Document::new(format!("d{i}"), "t", i)).collect();
    let config = RankConfig { retry_limit: 2, ..RankConfig::default() };
    let err = run_ranking(&docs, "q", &config, &ranker).unwrap_err();
    let RankError::Aborted(diag) = err else { panic!("expected abort") };
    assert!(matches!(diag.cause, BatchFailure::Ranker { attempts: 3, source: RankerError::Status { status: 503, .. } }));
    assert_eq!(calls.load(Ordering::SeqCst), 3);
}

#[test]
fn garbled_answer_is_repaired() {
    let server = common::serve(|req| {
        let docs = common::prompt_documents(&req.body);
        let content = format!("Sure! The best is {} and then {}.", docs[1].0, docs[0].0);
        (200, common::completion(&content, 5, 5))
    });
    let ranker = LlmRanker::new(client(&server.base_url));
    let docs: Vec<Document> = (0..3).map(|i| Document::new(format!("d{i}"), "t", i)).collect();
    let request_keys = ["k0000001", "k0000002", "k0000003"];
    let req = siftrank::rankers::BatchRequest {
        query: "q",
        entries: docs
            .iter()
            .zip(request_keys)
            .map(|(d, k)| siftrank::rankers::BatchEntry { key: k.into(), id: &d.id, text: &d.text })
            .collect(),
        attempt: 0,
    };
    let out = ranker.rank_batch(&req).unwrap();
    assert_eq!(out.ordered_keys, ["k0000002", "k0000001", "k0000003"]);
}
