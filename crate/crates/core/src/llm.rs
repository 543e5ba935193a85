//! HTTP bridge to any endpoint exposing next-token log-probabilities in the
//! OpenAI completions shape, with caching, bounded concurrency, retry, and
//! fixture record/replay so everything downstream is testable offline.
//!
//! Lookup order is fixture, then in-memory cache, then on-disk cache, then
//! the network; cache and fixture hits never touch the network.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex, RwLock};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("transport failure after retries: {0}")]
    Transport(String),
    #[error("API key environment variable {0} is not set")]
    AuthMissing(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("fixture error: {0}")]
    Fixture(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where to reach the model and how hard to lean on it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_id: String,
    /// Name of the environment variable holding the API key; no
    /// Authorization header is sent when absent.
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Number of top token log-probabilities to request.
    #[serde(default = "default_top_logprobs")]
    pub top_logprobs: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_inflight")]
    pub max_inflight: usize,
    /// Optional instruction text prepended to the raw encoded sequence.
    #[serde(default)]
    pub prompt_prefix: Option<String>,
}

fn default_top_logprobs() -> usize {
    20
}
fn default_timeout_secs() -> f64 {
    30.0
}
fn default_max_inflight() -> usize {
    4
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), BridgeError> {
        if self.top_logprobs == 0 {
            return Err(BridgeError::MalformedResponse(
                "top_logprobs must be >= 1".into(),
            ));
        }
        if self.max_inflight == 0 {
            return Err(BridgeError::MalformedResponse(
                "max_inflight must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionSource {
    Live,
    Cache,
    Fixture,
}

/// Top-K token log-probabilities for a single next-token query.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    pub logprobs: BTreeMap<String, f64>,
    pub source: DistributionSource,
}

#[derive(Debug, Serialize, Deserialize)]
struct FixtureFile {
    version: u32,
    model_id: String,
    recorded_unix: u64,
    entries: Vec<FixtureEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FixtureEntry {
    prompt_sha256: String,
    prompt: String,
    logprobs: BTreeMap<String, f64>,
}

const FIXTURE_VERSION: u32 = 1;

/// Blocking gauge bounding concurrent live requests, with a peak counter as
/// the observability hook for tests.
struct InflightGauge {
    current: Mutex<usize>,
    released: Condvar,
    peak: AtomicUsize,
}

impl InflightGauge {
    fn new() -> Self {
        Self {
            current: Mutex::new(0),
            released: Condvar::new(),
            peak: AtomicUsize::new(0),
        }
    }

    fn acquire(&self, limit: usize) {
        let mut n = self.current.lock().unwrap();
        while *n >= limit {
            n = self.released.wait(n).unwrap();
        }
        *n += 1;
        self.peak.fetch_max(*n, Ordering::SeqCst);
    }

    fn release(&self) {
        let mut n = self.current.lock().unwrap();
        *n -= 1;
        drop(n);
        self.released.notify_one();
    }
}

/// Thread-safe client handle. Clone-free: share by reference or `Arc`.
pub struct LlmClient {
    config: EndpointConfig,
    agent: ureq::Agent,
    fixture: Option<HashMap<String, BTreeMap<String, f64>>>,
    memory: RwLock<HashMap<String, BTreeMap<String, f64>>>,
    cache_dir: Option<PathBuf>,
    inflight: InflightGauge,
    retry_base: Duration,
}

impl LlmClient {
    pub fn new(config: EndpointConfig) -> Result<Self, BridgeError> {
        config.validate()?;
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .build();
        Ok(Self {
            config,
            agent: ureq::Agent::new_with_config(agent_config),
            fixture: None,
            memory: RwLock::new(HashMap::new()),
            cache_dir: None,
            inflight: InflightGauge::new(),
            retry_base: Duration::from_millis(100),
        })
    }

    /// Persist live responses under this directory, keyed by
    /// `(model_id, prompt hash, K)`.
    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Result<Self, BridgeError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        self.cache_dir = Some(dir);
        Ok(self)
    }

    /// Replay responses from a recorded fixture file.
    pub fn with_fixture(mut self, path: &Path) -> Result<Self, BridgeError> {
        let text = std::fs::read_to_string(path)?;
        let file: FixtureFile = serde_json::from_str(&text)
            .map_err(|e| BridgeError::Fixture(format!("{}: {e}", path.display())))?;
        if file.version != FIXTURE_VERSION {
            return Err(BridgeError::Fixture(format!(
                "unsupported fixture version {}",
                file.version
            )));
        }
        let map = file
            .entries
            .into_iter()
            .map(|e| (e.prompt_sha256, e.logprobs))
            .collect();
        self.fixture = Some(map);
        Ok(self)
    }

    /// Shorten retry backoff; test hook.
    pub fn with_retry_base(mut self, base: Duration) -> Self {
        self.retry_base = base;
        self
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// Highest number of simultaneously in-flight live requests observed.
    pub fn peak_inflight(&self) -> usize {
        self.inflight.peak.load(Ordering::SeqCst)
    }

    fn cache_key(&self, prompt: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.config.model_id.as_bytes());
        hasher.update([0]);
        hasher.update(prompt.as_bytes());
        hasher.update([0]);
        hasher.update(self.config.top_logprobs.to_le_bytes());
        hex(&hasher.finalize())
    }

    fn prompt_hash(prompt: &str) -> String {
        hex(&Sha256::digest(prompt.as_bytes()))
    }

    /// Request the next-token distribution for a prompt: exactly one new
    /// token with `K` top log-probabilities.
    pub fn next_token_distribution(&self, prompt: &str) -> Result<TokenDistribution, BridgeError> {
        if let Some(fixture) = &self.fixture {
            if let Some(entry) = fixture.get(&Self::prompt_hash(prompt)) {
                return Ok(TokenDistribution {
                    logprobs: entry.clone(),
                    source: DistributionSource::Fixture,
                });
            }
        }

        let key = self.cache_key(prompt);
        if let Some(hit) = self.memory.read().unwrap().get(&key) {
            return Ok(TokenDistribution {
                logprobs: hit.clone(),
                source: DistributionSource::Cache,
            });
        }
        if let Some(dir) = &self.cache_dir {
            let path = dir.join(format!("{key}.json"));
            if let Ok(text) = std::fs::read_to_string(&path) {
                let logprobs: BTreeMap<String, f64> = serde_json::from_str(&text)
                    .map_err(|e| BridgeError::Fixture(format!("corrupt cache entry: {e}")))?;
                self.memory.write().unwrap().insert(key, logprobs.clone());
                return Ok(TokenDistribution {
                    logprobs,
                    source: DistributionSource::Cache,
                });
            }
        }

        let logprobs = self.fetch_live(prompt)?;
        self.memory
            .write()
            .unwrap()
            .insert(key.clone(), logprobs.clone());
        if let Some(dir) = &self.cache_dir {
            let path = dir.join(format!("{key}.json"));
            let body = serde_json::to_string(&logprobs).expect("serializable map");
            atomic_write(&path, body.as_bytes())?;
        }
        Ok(TokenDistribution {
            logprobs,
            source: DistributionSource::Live,
        })
    }

    /// Record fixtures for a list of prompts against the live endpoint. The
    /// file is written atomically only after every prompt succeeds.
    pub fn record_fixture(&self, prompts: &[String], path: &Path) -> Result<(), BridgeError> {
        let mut entries = Vec::with_capacity(prompts.len());
        for prompt in prompts {
            let logprobs = self.fetch_live(prompt)?;
            entries.push(FixtureEntry {
                prompt_sha256: Self::prompt_hash(prompt),
                prompt: prompt.clone(),
                logprobs,
            });
        }
        let file = FixtureFile {
            version: FIXTURE_VERSION,
            model_id: self.config.model_id.clone(),
            recorded_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            entries,
        };
        let body = serde_json::to_string_pretty(&file).expect("serializable fixture");
        atomic_write(path, body.as_bytes())?;
        Ok(())
    }

    fn fetch_live(&self, prompt: &str) -> Result<BTreeMap<String, f64>, BridgeError> {
        let api_key = match &self.config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| BridgeError::AuthMissing(var.clone()))?),
            None => None,
        };
        let url = format!("{}/v1/completions", self.config.base_url.trim_end_matches('/'));
        let full_prompt = match &self.config.prompt_prefix {
            Some(prefix) => format!("{prefix}{prompt}"),
            None => prompt.to_string(),
        };
        let body = serde_json::json!({
            "model": self.config.model_id,
            "prompt": full_prompt,
            "max_tokens": 1,
            "logprobs": self.config.top_logprobs,
            "temperature": 0,
        });

        self.inflight.acquire(self.config.max_inflight);
        let result = self.fetch_with_retry(&url, api_key.as_deref(), &body);
        self.inflight.release();
        result
    }

    fn fetch_with_retry(
        &self,
        url: &str,
        api_key: Option<&str>,
        body: &serde_json::Value,
    ) -> Result<BTreeMap<String, f64>, BridgeError> {
        const ATTEMPTS: usize = 3;
        let mut last_err = String::new();
        for attempt in 0..ATTEMPTS {
            if attempt > 0 {
                std::thread::sleep(self.retry_base * (1 << (attempt - 1) as u32));
            }
            let mut req = self.agent.post(url);
            if let Some(key) = api_key {
                req = req.header("Authorization", format!("Bearer {key}"));
            }
            match req.send_json(body) {
                Ok(mut response) => {
                    let value: serde_json::Value = response
                        .body_mut()
                        .read_json()
                        .map_err(|e| BridgeError::MalformedResponse(e.to_string()))?;
                    return parse_completion(&value, self.config.top_logprobs);
                }
                Err(err) => {
                    if !is_transient(&err) {
                        return Err(BridgeError::Transport(err.to_string()));
                    }
                    last_err = err.to_string();
                }
            }
        }
        Err(BridgeError::Transport(last_err))
    }
}

fn is_transient(err: &ureq::Error) -> bool {
    match err {
        ureq::Error::StatusCode(code) => *code == 429 || *code >= 500,
        ureq::Error::Timeout(_) | ureq::Error::Io(_) | ureq::Error::HostNotFound => true,
        ureq::Error::ConnectionFailed => true,
        _ => false,
    }
}

/// Pull `choices[0].logprobs.top_logprobs[0]` out of a completions response.
fn parse_completion(
    value: &serde_json::Value,
    k: usize,
) -> Result<BTreeMap<String, f64>, BridgeError> {
    let logprobs = value
        .get("choices")
        .and_then(|c| c.get(0))
        .and_then(|c| c.get("logprobs"))
        .ok_or_else(|| BridgeError::MalformedResponse("missing choices[0].logprobs".into()))?;

    let mut out = BTreeMap::new();
    if let Some(top) = logprobs.get("top_logprobs").and_then(|t| t.get(0)).and_then(|t| t.as_object()) {
        for (token, lp) in top {
            let lp = lp
                .as_f64()
                .ok_or_else(|| BridgeError::MalformedResponse("non-numeric logprob".into()))?;
            out.insert(token.clone(), lp.min(0.0));
        }
    } else if let (Some(tokens), Some(lps)) = (
        logprobs.get("tokens").and_then(|t| t.as_array()),
        logprobs.get("token_logprobs").and_then(|t| t.as_array()),
    ) {
        if let (Some(tok), Some(lp)) = (
            tokens.first().and_then(|t| t.as_str()),
            lps.first().and_then(|l| l.as_f64()),
        ) {
            out.insert(tok.to_string(), lp.min(0.0));
        }
    }
    if out.is_empty() {
        return Err(BridgeError::MalformedResponse(
            "no token logprobs in response".into(),
        ));
    }
    // Keep only the K most probable tokens.
    while out.len() > k {
        let worst = out
            .iter()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(t, _)| t.clone())
            .expect("nonempty");
        out.remove(&worst);
    }
    Ok(out)
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), std::io::Error> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Build a fixture file directly from known prompt/logprob pairs. Used by
/// offline tests and by anyone preparing deterministic replays by hand.
pub fn write_fixture(
    model_id: &str,
    entries: &[(String, BTreeMap<String, f64>)],
    path: &Path,
) -> Result<(), BridgeError> {
    let file = FixtureFile {
        version: FIXTURE_VERSION,
        model_id: model_id.to_string(),
        recorded_unix: 0,
        entries: entries
            .iter()
            .map(|(prompt, logprobs)| FixtureEntry {
                prompt_sha256: hex(&Sha256::digest(prompt.as_bytes())),
                prompt: prompt.clone(),
                logprobs: logprobs.clone(),
            })
            .collect(),
    };
    let body = serde_json::to_string_pretty(&file).expect("serializable fixture");
    atomic_write(path, body.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unreachable_config() -> EndpointConfig {
        EndpointConfig {
            base_url: "http://127.0.0.1:1".into(),
            model_id: "test-model".into(),
            api_key_env: None,
            top_logprobs: 20,
            timeout_secs: 0.2,
            max_inflight: 2,
            prompt_prefix: None,
        }
    }

    #[test]
    fn fixture_replay_is_deterministic_and_offline() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixture.json");
        let mut lp = BTreeMap::new();
        lp.insert("A".to_string(), -0.1);
        lp.insert("B".to_string(), -2.4);
        write_fixture("test-model", &[("AB".to_string(), lp.clone())], &path).unwrap();

        let client = LlmClient::new(unreachable_config())
            .unwrap()
            .with_fixture(&path)
            .unwrap();
        let first = client.next_token_distribution("AB").unwrap();
        let second = client.next_token_distribution("AB").unwrap();
        assert_eq!(first.source, DistributionSource::Fixture);
        assert_eq!(first.logprobs, lp);
        assert_eq!(first, second);
    }

    #[test]
    fn fixture_miss_on_unreachable_endpoint_is_transport_error() {
        let client = LlmClient::new(unreachable_config())
            .unwrap()
            .with_retry_base(Duration::from_millis(1));
        let err = client.next_token_distribution("AB").unwrap_err();
        assert!(matches!(err, BridgeError::Transport(_)), "{err}");
    }

    #[test]
    fn missing_api_key_env_is_auth_error() {
        let mut config = unreachable_config();
        config.api_key_env = Some("HMMLAB_TEST_KEY_THAT_DOES_NOT_EXIST".into());
        let client = LlmClient::new(config).unwrap();
        let err = client.next_token_distribution("AB").unwrap_err();
        assert!(matches!(err, BridgeError::AuthMissing(_)));
    }

    #[test]
    fn parse_extracts_top_logprobs() {
        let value = serde_json::json!({
            "choices": [{
                "text": "A",
                "logprobs": {
                    "tokens": ["A"],
                    "token_logprobs": [-0.1],
                    "top_logprobs": [{"A": -0.1, "B": -2.4}]
                }
            }]
        });
        let map = parse_completion(&value, 20).unwrap();
        assert_eq!(map.len(), 2);
        assert_eq!(map["A"], -0.1);
    }

    #[test]
    fn parse_enforces_k_limit() {
        let value = serde_json::json!({
            "choices": [{
                "logprobs": {"top_logprobs": [{"A": -0.1, "B": -2.4, "C": -5.0}]}
            }]
        });
        let map = parse_completion(&value, 1).unwrap();
        assert_eq!(map.len(), 1);
        assert!(map.contains_key("A"));
    }

    #[test]
    fn parse_rejects_missing_logprobs() {
        let value = serde_json::json!({"choices": [{"text": "A"}]});
        assert!(matches!(
            parse_completion(&value, 20),
            Err(BridgeError::MalformedResponse(_))
        ));
    }
}
