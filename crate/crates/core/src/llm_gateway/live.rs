use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatClient, ChatRequest, GatewayError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiveConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
    /// First backoff delay; doubles on every retry.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

fn default_concurrency() -> usize {
    4
}
fn default_retries() -> u32 {
    4
}
fn default_timeout() -> u64 {
    120
}
fn default_backoff() -> u64 {
    500
}

impl LiveConfig {
    pub fn new(base_url: &str, model: &str) -> Self {
        LiveConfig {
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            max_concurrency: default_concurrency(),
            max_retries: default_retries(),
            timeout_s: default_timeout(),
            backoff_ms: default_backoff(),
        }
    }
}

/// Counting semaphore capping in-flight requests.
struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// OpenAI-compatible `POST {base_url}/chat/completions` client.
pub struct LiveClient {
    config: LiveConfig,
    api_key: String,
    agent: ureq::Agent,
    permits: Permits,
}

impl LiveClient {
    pub fn new(config: LiveConfig, api_key: String) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        let permits = Permits { free: Mutex::new(config.max_concurrency.max(1)), cv: Condvar::new() };
        LiveClient { config, api_key, agent, permits }
    }

    /// Reads the key from `DIGKNOW_API_KEY`.
    pub fn from_env(config: LiveConfig) -> Result<Self, GatewayError> {
        let key = std::env::var("DIGKNOW_API_KEY").map_err(|_| GatewayError::MissingApiKey)?;
        Ok(LiveClient::new(config, key))
    }

    fn attempt(&self, body: &Value) -> Result<String, (bool, GatewayError)> {
        let url = format!("{}/chat/completions", self.config.base_url);
        let resp = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body)
            .map_err(|e| (true, GatewayError::Transport(e.to_string())))?;
        let status = resp.status().as_u16();
        let mut body = resp.into_body();
        if status != 200 {
            let text = body.read_to_string().unwrap_or_default();
            let retryable = status == 429 || status >= 500;
            return Err((retryable, GatewayError::Http { status, body: text }));
        }
        let v: Value = body.read_json().map_err(|e| (true, GatewayError::Transport(e.to_string())))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| (false, GatewayError::Transport(format!("response has no message content: {v}"))))
    }
}

impl ChatClient for LiveClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.params.temperature,
            "max_tokens": request.params.max_tokens,
        });
        let _permit = self.permits.acquire();
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err((retryable, err)) => {
                    if !retryable || attempt >= self.config.max_retries {
                        return Err(err);
                    }
                    tracing::warn!(%err, attempt, "retrying chat completion");
                    thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
            }
        }
    }
}
