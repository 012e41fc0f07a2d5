//! Disk replay cache, live OpenAI-style client and the gateway combining them.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use llmexpert_core::gateway::{request_digest, to_hex, TEMPERATURE};
use llmexpert_core::{ChatBackend, ChatExchange, ExchangeSource, GatewayError, MockScript};
use serde::Deserialize;

use crate::fsutil::write_json;

pub const DEFAULT_ATTEMPTS: u32 = 3;
pub const DEFAULT_BACKOFF: Duration = Duration::from_secs(1);
pub const DEFAULT_IN_FLIGHT: usize = 4;

/// One JSON file per request digest.
#[derive(Debug, Clone)]
pub struct DiskCache {
    root: PathBuf,
}

impl DiskCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, digest: &[u8; 32]) -> PathBuf {
        self.root.join(format!("{}.json", to_hex(digest)))
    }

    pub fn contains(&self, model: &str, system: &str, user: &str) -> bool {
        self.path_for(&request_digest(model, system, user, TEMPERATURE)).is_file()
    }

    /// The stored exchange, provided it really is for this request.
    pub fn get(&self, model: &str, system: &str, user: &str) -> Result<Option<ChatExchange>, GatewayError> {
        let path = self.path_for(&request_digest(model, system, user, TEMPERATURE));
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(GatewayError::Cache(format!("{}: {e}", path.display()))),
        };
        let ex: ChatExchange = serde_json::from_slice(&bytes)
            .map_err(|e| GatewayError::Cache(format!("{}: {e}", path.display())))?;
        let same = ex.model == model && ex.system == system && ex.user == user && ex.temperature == TEMPERATURE;
        Ok(same.then_some(ex))
    }

    pub fn put(&self, exchange: &ChatExchange) -> Result<(), GatewayError> {
        let path = self.path_for(&exchange.digest());
        write_json(&path, exchange).map_err(|e| GatewayError::Cache(format!("{}: {e}", path.display())))
    }

    pub fn len(&self) -> usize {
        std::fs::read_dir(&self.root)
            .map(|d| {
                d.filter_map(Result::ok)
                    .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: DEFAULT_ATTEMPTS,
            backoff: DEFAULT_BACKOFF,
        }
    }
}

/// Outcome of a single HTTP attempt.
pub enum Attempt<T> {
    Done(T),
    Retry { rate_limited: bool, message: String },
    Fatal(GatewayError),
}

impl RetryPolicy {
    /// Runs `f` up to `attempts` times, sleeping `backoff * 2^i` in between.
    pub fn run<T>(&self, mut f: impl FnMut() -> Attempt<T>) -> Result<T, GatewayError> {
        let attempts = self.attempts.max(1);
        let mut last = (false, String::new());
        for i in 0..attempts {
            if i > 0 {
                std::thread::sleep(self.backoff * 2u32.pow(i - 1));
            }
            match f() {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry { rate_limited, message } => last = (rate_limited, message),
            }
        }
        Err(if last.0 {
            GatewayError::RateLimited { attempts }
        } else {
            GatewayError::Transport {
                attempts,
                message: last.1,
            }
        })
    }
}

/// Classifies a ureq result: rate limits and server or transport errors are
/// retried, other client errors are not.
pub fn classify(result: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Attempt<ureq::http::Response<ureq::Body>> {
    match result {
        Ok(resp) => {
            let status = resp.status().as_u16();
            match status {
                200..=299 => Attempt::Done(resp),
                429 => Attempt::Retry {
                    rate_limited: true,
                    message: "HTTP 429".into(),
                },
                500..=599 => Attempt::Retry {
                    rate_limited: false,
                    message: format!("HTTP {status}"),
                },
                _ => Attempt::Fatal(GatewayError::Config(format!("endpoint answered HTTP {status}"))),
            }
        }
        Err(e) => Attempt::Retry {
            rate_limited: false,
            message: e.to_string(),
        },
    }
}

pub fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(timeout))
        .build()
        .into()
}

#[derive(Debug, Clone)]
pub struct LiveConfig {
    /// Base URL; `/chat/completions` is appended unless already present.
    pub endpoint: String,
    pub api_key: Option<String>,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
    pub timeout: Duration,
}

impl LiveConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: None,
            retry: RetryPolicy::default(),
            max_in_flight: DEFAULT_IN_FLIGHT,
            timeout: Duration::from_secs(120),
        }
    }

    pub fn url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

/// OpenAI-style chat-completion client.
pub struct LiveClient {
    config: LiveConfig,
    agent: ureq::Agent,
    slots: Slots,
    requests: AtomicUsize,
}

impl LiveClient {
    pub fn new(config: LiveConfig) -> Self {
        Self {
            agent: agent(config.timeout),
            slots: Slots::new(config.max_in_flight),
            requests: AtomicUsize::new(0),
            config,
        }
    }

    /// HTTP requests sent, retries included.
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl ChatBackend for LiveClient {
    fn complete(&self, model: &str, system: &str, user: &str) -> Result<ChatExchange, GatewayError> {
        let body = serde_json::json!({
            "model": model,
            "temperature": TEMPERATURE,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        let url = self.config.url();
        let _slot = self.slots.acquire();
        let start = Instant::now();
        let text = self.config.retry.run(|| {
            self.requests.fetch_add(1, Ordering::SeqCst);
            let mut req = self.agent.post(&url);
            if let Some(key) = &self.config.api_key {
                req = req.header("Authorization", format!("Bearer {key}"));
            }
            match classify(req.send_json(&body)) {
                Attempt::Done(mut resp) => match resp.body_mut().read_json::<CompletionBody>() {
                    Ok(parsed) => Attempt::Done(
                        parsed
                            .choices
                            .into_iter()
                            .next()
                            .and_then(|c| c.message.content)
                            .unwrap_or_default(),
                    ),
                    Err(e) => Attempt::Retry {
                        rate_limited: false,
                        message: format!("unreadable completion body: {e}"),
                    },
                },
                Attempt::Retry { rate_limited, message } => Attempt::Retry { rate_limited, message },
                Attempt::Fatal(e) => Attempt::Fatal(e),
            }
        })?;
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyResponse);
        }
        Ok(ChatExchange {
            model: model.into(),
            system: system.into(),
            user: user.into(),
            temperature: TEMPERATURE,
            response: text,
            latency_ms: start.elapsed().as_millis() as u64,
            source: ExchangeSource::Live,
        })
    }
}

pub enum Upstream {
    Live(LiveClient),
    Mock(MockScript),
    /// Cache only.
    None,
}

/// What the pipelines talk to: cache first, then the upstream backend.
/// Mock traffic bypasses the cache.
pub struct Gateway {
    cache: Option<DiskCache>,
    upstream: Upstream,
    offline: bool,
    live_calls: AtomicUsize,
}

impl Gateway {
    pub fn new(cache: Option<DiskCache>, upstream: Upstream, offline: bool) -> Self {
        Self {
            cache,
            upstream,
            offline,
            live_calls: AtomicUsize::new(0),
        }
    }

    pub fn cache(&self) -> Option<&DiskCache> {
        self.cache.as_ref()
    }

    pub fn is_mock(&self) -> bool {
        matches!(self.upstream, Upstream::Mock(_))
    }

    /// True when cache misses cannot be sent anywhere.
    pub fn is_offline(&self) -> bool {
        match self.upstream {
            Upstream::Mock(_) => false,
            Upstream::Live(_) => self.offline,
            Upstream::None => true,
        }
    }

    /// Whether a request would be answered without a live call.
    pub fn can_answer_offline(&self, model: &str, system: &str, user: &str) -> bool {
        self.is_mock() || self.cache.as_ref().is_some_and(|c| c.contains(model, system, user))
    }

    /// Live completions performed by this gateway.
    pub fn live_calls(&self) -> usize {
        self.live_calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for Gateway {
    fn complete(&self, model: &str, system: &str, user: &str) -> Result<ChatExchange, GatewayError> {
        if system.trim().is_empty() || user.trim().is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        if let Upstream::Mock(mock) = &self.upstream {
            return mock.complete(model, system, user);
        }
        if let Some(cache) = &self.cache {
            if let Some(mut hit) = cache.get(model, system, user)? {
                hit.source = ExchangeSource::Cache;
                return Ok(hit);
            }
        }
        let digest = to_hex(&request_digest(model, system, user, TEMPERATURE));
        let live = match &self.upstream {
            Upstream::Live(c) if !self.offline => c,
            _ => return Err(GatewayError::OfflineMiss(digest)),
        };
        self.live_calls.fetch_add(1, Ordering::SeqCst);
        let exchange = live.complete(model, system, user)?;
        if let Some(cache) = &self.cache {
            cache.put(&exchange)?;
        }
        Ok(exchange)
    }
}
