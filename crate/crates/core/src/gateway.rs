//! Chat-completion abstraction shared by every prompting pipeline.
//!
//! Backends implement [`ChatBackend`]. The scripted [`MockScript`] lives here;
//! the live HTTP client and the on-disk replay cache live in the harness crate.
//! All harness traffic runs at temperature zero.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const TEMPERATURE: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("prompts must not be empty")]
    EmptyPrompt,
    #[error("model returned an empty response")]
    EmptyResponse,
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("rate limit still in effect after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("offline mode: no cached response for request {0}")]
    OfflineMiss(String),
    #[error("gateway misconfigured: {0}")]
    Config(String),
    #[error("response cache: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExchangeSource {
    Live,
    Cache,
    Mock,
}

/// One completed request/response pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub model: String,
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub response: String,
    pub latency_ms: u64,
    pub source: ExchangeSource,
}

impl ChatExchange {
    pub fn digest(&self) -> [u8; 32] {
        request_digest(&self.model, &self.system, &self.user, self.temperature)
    }
}

pub trait ChatBackend: Sync {
    fn complete(&self, model: &str, system: &str, user: &str) -> Result<ChatExchange, GatewayError>;
}

impl<T: ChatBackend + ?Sized> ChatBackend for &T {
    fn complete(&self, model: &str, system: &str, user: &str) -> Result<ChatExchange, GatewayError> {
        (**self).complete(model, system, user)
    }
}

/// SHA-256 over length-prefixed (model, system, user, temperature bits).
pub fn request_digest(model: &str, system: &str, user: &str, temperature: f64) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for part in [model.as_bytes(), system.as_bytes(), user.as_bytes()] {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    hasher.update(temperature.to_bits().to_le_bytes());
    hasher.finalize().into()
}

pub fn to_hex(bytes: &[u8]) -> String {
    const HEX: &[u8; 16] = b"0123456789abcdef";
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push(HEX[(b >> 4) as usize] as char);
        out.push(HEX[(b & 0xf) as usize] as char);
    }
    out
}

pub(crate) fn check_prompts(system: &str, user: &str) -> Result<(), GatewayError> {
    if system.trim().is_empty() || user.trim().is_empty() {
        Err(GatewayError::EmptyPrompt)
    } else {
        Ok(())
    }
}

/// One scripted reply. Exactly one of `contains` / `glob` should be set; an
/// entry with neither matches every prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    /// Whole-prompt pattern; `*` matches any run of characters, `?` one character.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub glob: Option<String>,
    pub response: String,
}

impl MockEntry {
    pub fn contains(needle: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            contains: Some(needle.into()),
            glob: None,
            response: response.into(),
        }
    }

    pub fn glob(pattern: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            contains: None,
            glob: Some(pattern.into()),
            response: response.into(),
        }
    }

    fn matches(&self, user: &str) -> bool {
        self.contains.as_deref().is_none_or(|n| user.contains(n))
            && self.glob.as_deref().is_none_or(|g| glob_match(g, user))
    }
}

/// Deterministic test double: the first matching entry wins, otherwise the
/// fallback is returned.
#[derive(Debug, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub entries: Vec<MockEntry>,
    pub fallback: String,
    #[serde(skip)]
    calls: AtomicUsize,
}

impl Clone for MockScript {
    fn clone(&self) -> Self {
        Self {
            entries: self.entries.clone(),
            fallback: self.fallback.clone(),
            calls: AtomicUsize::new(self.calls()),
        }
    }
}

impl MockScript {
    pub fn new(entries: Vec<MockEntry>, fallback: impl Into<String>) -> Self {
        Self {
            entries,
            fallback: fallback.into(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn respond(&self, user: &str) -> &str {
        self.entries
            .iter()
            .find(|e| e.matches(user))
            .map_or(self.fallback.as_str(), |e| e.response.as_str())
    }

    /// Number of completions served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for MockScript {
    fn complete(&self, model: &str, system: &str, user: &str) -> Result<ChatExchange, GatewayError> {
        check_prompts(system, user)?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let response = self.respond(user).to_string();
        if response.trim().is_empty() {
            return Err(GatewayError::EmptyResponse);
        }
        Ok(ChatExchange {
            model: model.into(),
            system: system.into(),
            user: user.into(),
            temperature: TEMPERATURE,
            response,
            latency_ms: 0,
            source: ExchangeSource::Mock,
        })
    }
}

/// Backend computing each reply with a closure over (system, user).
pub struct FnBackend<F> {
    reply: F,
    calls: AtomicUsize,
}

impl<F> FnBackend<F>
where
    F: Fn(&str, &str) -> String + Sync,
{
    pub fn new(reply: F) -> Self {
        Self {
            reply,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&str, &str) -> String + Sync,
{
    fn complete(&self, model: &str, system: &str, user: &str) -> Result<ChatExchange, GatewayError> {
        check_prompts(system, user)?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let response = (self.reply)(system, user);
        if response.trim().is_empty() {
            return Err(GatewayError::EmptyResponse);
        }
        Ok(ChatExchange {
            model: model.into(),
            system: system.into(),
            user: user.into(),
            temperature: TEMPERATURE,
            response,
            latency_ms: 0,
            source: ExchangeSource::Mock,
        })
    }
}

/// Iterative wildcard matcher over chars with single-star backtracking.
pub fn glob_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    let (mut pi, mut ti) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && (p[pi] == '?' || p[pi] == t[ti]) {
            pi += 1;
            ti += 1;
        } else if pi < p.len() && p[pi] == '*' {
            star = Some((pi, ti));
            pi += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&c| c == '*')
}
