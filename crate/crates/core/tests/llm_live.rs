//! Bridge tests against a local HTTP server: request shape, caching, retry,
//! and the in-flight bound.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use hmmlab::llm::{DistributionSource, EndpointConfig, LlmClient};

struct TestServer {
    url: String,
    hits: Arc<AtomicUsize>,
    handle: Option<std::thread::JoinHandle<()>>,
    shutdown: Arc<std::sync::atomic::AtomicBool>,
    server: Arc<tiny_http::Server>,
}

impl TestServer {
    /// Serve completions; `behavior` receives the hit index, the request's
    /// Authorization header (if any), and the parsed body, returning
    /// (status, response body).
    fn start<F>(behavior: F) -> Self
    where
        F: Fn(usize, Option<String>, serde_json::Value) -> (u16, String) + Send + 'static,
    {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let url = format!("http://{}", server.server_addr());
        let hits = Arc::new(AtomicUsize::new(0));
        let shutdown = Arc::new(std::sync::atomic::AtomicBool::new(false));
        let handle = {
            let server = server.clone();
            let hits = hits.clone();
            let shutdown = shutdown.clone();
            std::thread::spawn(move || {
                while !shutdown.load(Ordering::SeqCst) {
                    match server.recv_timeout(Duration::from_millis(50)) {
                        Ok(Some(mut request)) => {
                            let auth = request
                                .headers()
                                .iter()
                                .find(|h| h.field.equiv("Authorization"))
                                .map(|h| h.value.as_str().to_string());
                            let mut body = String::new();
                            std::io::Read::read_to_string(request.as_reader(), &mut body).ok();
                            let value: serde_json::Value =
                                serde_json::from_str(&body).unwrap_or(serde_json::Value::Null);
                            let n = hits.fetch_add(1, Ordering::SeqCst);
                            let (status, response) = behavior(n, auth, value);
                            let header = tiny_http::Header::from_bytes(
                                &b"Content-Type"[..],
                                &b"application/json"[..],
                            )
                            .unwrap();
                            let _ = request.respond(
                                tiny_http::Response::from_string(response)
                                    .with_status_code(status)
                                    .with_header(header),
                            );
                        }
                        _ => continue,
                    }
                }
            })
        };
        Self {
            url,
            hits,
            handle: Some(handle),
            shutdown,
            server,
        }
    }

    fn hit_count(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn ok_completion(token: &str, lp: f64) -> String {
    serde_json::json!({
        "choices": [{
            "text": token,
            "logprobs": {
                "tokens": [token],
                "token_logprobs": [lp],
                "top_logprobs": [{token: lp, "Z": -9.0}]
            }
        }]
    })
    .to_string()
}

fn config_for(url: &str) -> EndpointConfig {
    EndpointConfig {
        base_url: url.to_string(),
        model_id: "test-model".into(),
        api_key_env: None,
        top_logprobs: 5,
        timeout_secs: 5.0,
        max_inflight: 2,
        prompt_prefix: None,
    }
}

#[test]
fn live_request_shape_and_response_parsing() {
    let server = TestServer::start(|_, _, body| {
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["max_tokens"], 1);
        assert_eq!(body["logprobs"], 5);
        assert_eq!(body["temperature"], 0);
        assert_eq!(body["prompt"], "ABAB");
        (200, ok_completion("A", -0.1))
    });
    let client = LlmClient::new(config_for(&server.url)).unwrap();
    let dist = client.next_token_distribution("ABAB").unwrap();
    assert_eq!(dist.source, DistributionSource::Live);
    assert_eq!(dist.logprobs["A"], -0.1);
    assert_eq!(server.hit_count(), 1);
}

#[test]
fn cache_serves_repeats_without_network() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(|_, _, _| (200, ok_completion("B", -0.2)));
    let client = LlmClient::new(config_for(&server.url))
        .unwrap()
        .with_cache_dir(dir.path().join("cache"))
        .unwrap();

    let first = client.next_token_distribution("AB").unwrap();
    assert_eq!(first.source, DistributionSource::Live);
    let second = client.next_token_distribution("AB").unwrap();
    assert_eq!(second.source, DistributionSource::Cache);
    assert_eq!(first.logprobs, second.logprobs);
    assert_eq!(server.hit_count(), 1, "repeat hit the network");

    // A fresh client against a dead endpoint still reads the disk cache.
    let mut dead = config_for("http://127.0.0.1:1");
    dead.timeout_secs = 0.2;
    let offline = LlmClient::new(dead)
        .unwrap()
        .with_cache_dir(dir.path().join("cache"))
        .unwrap();
    let third = offline.next_token_distribution("AB").unwrap();
    assert_eq!(third.source, DistributionSource::Cache);
    assert_eq!(third.logprobs, first.logprobs);
}

#[test]
fn transient_failures_retry_then_succeed() {
    let server = TestServer::start(|n, _, _| {
        if n < 2 {
            (500, "{\"error\": \"transient\"}".to_string())
        } else {
            (200, ok_completion("C", -0.3))
        }
    });
    let client = LlmClient::new(config_for(&server.url))
        .unwrap()
        .with_retry_base(Duration::from_millis(5));
    let dist = client.next_token_distribution("AB").unwrap();
    assert_eq!(dist.logprobs["C"], -0.3);
    assert_eq!(server.hit_count(), 3, "expected two retries before success");
}

#[test]
fn persistent_failures_exhaust_retries() {
    let server = TestServer::start(|_, _, _| (503, "{}".to_string()));
    let client = LlmClient::new(config_for(&server.url))
        .unwrap()
        .with_retry_base(Duration::from_millis(2));
    let err = client.next_token_distribution("AB").unwrap_err();
    assert!(matches!(err, hmmlab::llm::BridgeError::Transport(_)));
    assert_eq!(server.hit_count(), 3, "expected exactly three attempts");
}

#[test]
fn malformed_response_is_not_retried() {
    let server = TestServer::start(|_, _, _| (200, "{\"choices\": []}".to_string()));
    let client = LlmClient::new(config_for(&server.url)).unwrap();
    let err = client.next_token_distribution("AB").unwrap_err();
    assert!(matches!(err, hmmlab::llm::BridgeError::MalformedResponse(_)));
    assert_eq!(server.hit_count(), 1);
}

#[test]
fn auth_header_carries_key_from_env() {
    let server = TestServer::start(|_, auth, _| {
        assert_eq!(auth.as_deref(), Some("Bearer sk-test-123"));
        (200, ok_completion("A", -0.1))
    });
    std::env::set_var("HMMLAB_LLM_TEST_KEY", "sk-test-123");
    let mut config = config_for(&server.url);
    config.api_key_env = Some("HMMLAB_LLM_TEST_KEY".into());
    let client = LlmClient::new(config).unwrap();
    let dist = client.next_token_distribution("AB").unwrap();
    assert_eq!(dist.logprobs["A"], -0.1);
    assert_eq!(server.hit_count(), 1);
}

#[test]
fn inflight_never_exceeds_limit() {
    // Slow server + many parallel callers: the client-side gauge must cap
    // concurrent live requests at max_inflight.
    let server = TestServer::start(|_, _, body| {
        std::thread::sleep(Duration::from_millis(40));
        let prompt = body["prompt"].as_str().unwrap_or("").to_string();
        (200, ok_completion(&prompt[..1.min(prompt.len())], -0.5))
    });
    let mut config = config_for(&server.url);
    config.max_inflight = 2;
    let client = Arc::new(LlmClient::new(config).unwrap());

    let mut handles = Vec::new();
    for i in 0..8 {
        let client = client.clone();
        handles.push(std::thread::spawn(move || {
            client.next_token_distribution(&format!("P{i}")).unwrap();
        }));
    }
    for h in handles {
        h.join().unwrap();
    }
    assert_eq!(server.hit_count(), 8);
    assert!(
        client.peak_inflight() <= 2,
        "peak in-flight {} exceeded the limit",
        client.peak_inflight()
    );
}

#[test]
fn record_fixture_round_trips_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(|_, _, body| {
        let prompt = body["prompt"].as_str().unwrap_or("");
        (200, ok_completion(&prompt[..1], -0.25))
    });
    let client = LlmClient::new(config_for(&server.url)).unwrap();
    let prompts: Vec<String> = ["AAB", "BAB", "CAB"].iter().map(|s| s.to_string()).collect();
    let path = dir.path().join("fixture.json");
    client.record_fixture(&prompts, &path).unwrap();

    // Replay against a dead endpoint must reproduce the recorded responses.
    let mut dead = config_for("http://127.0.0.1:1");
    dead.timeout_secs = 0.2;
    let replay = LlmClient::new(dead).unwrap().with_fixture(&path).unwrap();
    for p in &prompts {
        let d = replay.next_token_distribution(p).unwrap();
        assert_eq!(d.source, DistributionSource::Fixture);
        assert_eq!(d.logprobs[&p[..1]], -0.25);
    }
    let first = replay.next_token_distribution("AAB").unwrap();
    let second = replay.next_token_distribution("AAB").unwrap();
    assert_eq!(first, second);
}

#[test]
fn record_fixture_empty_prompt_list_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let mut dead = config_for("http://127.0.0.1:1");
    dead.timeout_secs = 0.2;
    let client = LlmClient::new(dead).unwrap();
    let path = dir.path().join("empty.json");
    client.record_fixture(&[], &path).unwrap();
    assert!(path.exists());
    // Loadable as a fixture.
    let mut dead2 = config_for("http://127.0.0.1:1");
    dead2.timeout_secs = 0.2;
    LlmClient::new(dead2).unwrap().with_fixture(&path).unwrap();
}

#[test]
fn record_fixture_failure_leaves_no_partial_file() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(|n, _, _| {
        if n == 0 {
            (200, ok_completion("A", -0.1))
        } else {
            (400, "{\"error\": \"bad request\"}".to_string())
        }
    });
    let client = LlmClient::new(config_for(&server.url)).unwrap();
    let prompts: Vec<String> = ["ok", "fails"].iter().map(|s| s.to_string()).collect();
    let path = dir.path().join("partial.json");
    let err = client.record_fixture(&prompts, &path).unwrap_err();
    assert!(matches!(err, hmmlab::llm::BridgeError::Transport(_)));
    assert!(!path.exists(), "partial fixture must not be written");
}
