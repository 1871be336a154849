//! Generation and embedding backends.
//!
//! Wire protocols, documented bit-exactly:
//!
//! **Chat completion**: `POST <url>` with
//! `{"model": "...", "messages": [{"role": "system"|"user", "content": "..."}], "max_tokens": N}`;
//! the reply must carry the assistant text at
//! `choices[0].message.content` (completion token usage, when present, is
//! read from `usage.completion_tokens`). This is the interface local
//! inference servers expose.
//!
//! **Embedding**: `POST <url>` with
//! `{"input": ["text", ...], "mode": "sentence"|"token"}`; the reply must
//! carry `{"embeddings": [[f64, ...], ...]}`, one row per input, all rows
//! the same length.
//!
//! URL schemes accepted by the factories:
//!
//! * `http://...` / `https://...`: the real wire protocols above;
//! * `stub:`: generation stub returning empty text; `stub:<path>` loads a
//!   scripted JSON fixture (see [`StubFixture`]);
//! * `mock:`: the deterministic in-process embedder (`mock:<dim>` to pick
//!   a dimension).

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use sbash_core::genclient::{
    bundle_command, BackendReply, ChatBackend, GenError, GenerationConfig, PromptBundle,
};
use sbash_core::knowledge::{EmbedError, EmbeddingProvider, EmbeddingVector, MockEmbedder};

#[derive(Debug, thiserror::Error)]
pub enum BackendInitError {
    #[error("cannot read stub fixture {path}: {source}")]
    FixtureIo {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse stub fixture {path}: {source}")]
    FixtureParse {
        path: String,
        source: serde_json::Error,
    },
    #[error("unsupported backend url: {0}")]
    BadUrl(String),
}

// ---------------------------------------------------------------------------
// Chat-completion over HTTP
// ---------------------------------------------------------------------------

pub struct HttpChatBackend {
    url: String,
}

impl HttpChatBackend {
    pub fn new(url: impl Into<String>) -> Self {
        Self { url: url.into() }
    }
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

impl ChatBackend for HttpChatBackend {
    fn complete(
        &self,
        bundle: &PromptBundle,
        config: &GenerationConfig,
    ) -> Result<BackendReply, GenError> {
        let messages: Vec<WireMessage> = bundle
            .messages
            .iter()
            .map(|m| WireMessage {
                role: match m.role {
                    sbash_core::genclient::Role::System => "system",
                    sbash_core::genclient::Role::User => "user",
                },
                content: &m.content,
            })
            .collect();
        let body = serde_json::json!({
            "model": config.model_name,
            "messages": messages,
            "max_tokens": config.max_output_tokens,
        });

        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build();
        let response = agent
            .post(&self.url)
            .set("Content-Type", "application/json")
            .send_string(&body.to_string());

        let response = match response {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) => {
                let detail = r.into_string().unwrap_or_default();
                return Err(GenError::BackendUnavailable(format!(
                    "http status {code}: {detail}"
                )));
            }
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                if msg.contains("timed out") || msg.contains("timeout") {
                    return Err(GenError::Timeout(config.timeout_ms));
                }
                return Err(GenError::BackendUnavailable(msg));
            }
        };

        let value: serde_json::Value = response
            .into_json()
            .map_err(|e| GenError::MalformedResponse(format!("invalid json: {e}")))?;
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .ok_or_else(|| {
                GenError::MalformedResponse(format!(
                    "missing choices[0].message.content in {value}"
                ))
            })?
            .to_string();
        let token_count = value
            .pointer("/usage/completion_tokens")
            .and_then(|v| v.as_u64())
            .map(|n| n as usize);
        Ok(BackendReply { text, token_count })
    }
}

// ---------------------------------------------------------------------------
// Scriptable stub
// ---------------------------------------------------------------------------

/// On-disk shape of a stub script (`stub:<path>`): exact command ->
/// reply text, a default for everything else, and an optional artificial
/// delay.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StubFixture {
    #[serde(default)]
    pub default: String,
    #[serde(default)]
    pub delay_ms: u64,
    #[serde(default)]
    pub replies: BTreeMap<String, String>,
}

/// In-process backend for tests and offline runs. Replies are keyed by the
/// command (the final line of the user message); call counts and the
/// artificial delay make the no-call and latency properties assertable.
pub struct StubBackend {
    replies: BTreeMap<String, String>,
    default: String,
    delay_ms: AtomicU64,
    fail_with: Option<String>,
    calls: AtomicUsize,
}

impl StubBackend {
    /// Always reply with the same text.
    pub fn fixed(text: impl Into<String>) -> Self {
        Self {
            replies: BTreeMap::new(),
            default: text.into(),
            delay_ms: AtomicU64::new(0),
            fail_with: None,
            calls: AtomicUsize::new(0),
        }
    }

    /// Reply per command, falling back to `default`.
    pub fn scripted(replies: BTreeMap<String, String>, default: impl Into<String>) -> Self {
        Self {
            replies,
            default: default.into(),
            delay_ms: AtomicU64::new(0),
            fail_with: None,
            calls: AtomicUsize::new(0),
        }
    }

    /// Fail every call with `BackendUnavailable(cause)`.
    pub fn failing(cause: impl Into<String>) -> Self {
        let mut s = Self::fixed("");
        s.fail_with = Some(cause.into());
        s
    }

    pub fn from_fixture_file(path: impl AsRef<Path>) -> Result<Self, BackendInitError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| BackendInitError::FixtureIo {
            path: path.display().to_string(),
            source,
        })?;
        let fixture: StubFixture =
            serde_json::from_str(&text).map_err(|source| BackendInitError::FixtureParse {
                path: path.display().to_string(),
                source,
            })?;
        let stub = Self::scripted(fixture.replies, fixture.default);
        stub.delay_ms.store(fixture.delay_ms, Ordering::Relaxed);
        Ok(stub)
    }

    pub fn with_delay_ms(self, delay_ms: u64) -> Self {
        self.delay_ms.store(delay_ms, Ordering::Relaxed);
        self
    }

    /// Number of `complete` calls observed (the injection-gate tests assert
    /// this stays zero).
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for StubBackend {
    fn complete(
        &self,
        bundle: &PromptBundle,
        config: &GenerationConfig,
    ) -> Result<BackendReply, GenError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let delay = self.delay_ms.load(Ordering::Relaxed);
        if delay > 0 {
            if delay > config.timeout_ms {
                std::thread::sleep(Duration::from_millis(config.timeout_ms));
                return Err(GenError::Timeout(config.timeout_ms));
            }
            std::thread::sleep(Duration::from_millis(delay));
        }
        if let Some(cause) = &self.fail_with {
            return Err(GenError::BackendUnavailable(cause.clone()));
        }
        let command = bundle_command(bundle);
        let text = self.replies.get(command).unwrap_or(&self.default).clone();
        Ok(BackendReply {
            text,
            token_count: None,
        })
    }
}

/// Build a generation backend from a `--llm-url` value.
pub fn backend_from_url(url: &str) -> Result<Box<dyn ChatBackend + Send + Sync>, BackendInitError> {
    if let Some(rest) = url.strip_prefix("stub:") {
        if rest.is_empty() {
            return Ok(Box::new(StubBackend::fixed("")));
        }
        return Ok(Box::new(StubBackend::from_fixture_file(rest)?));
    }
    if url.starts_with("http://") || url.starts_with("https://") {
        return Ok(Box::new(HttpChatBackend::new(url)));
    }
    Err(BackendInitError::BadUrl(url.to_string()))
}

// ---------------------------------------------------------------------------
// Embedding over HTTP
// ---------------------------------------------------------------------------

pub struct HttpEmbedder {
    url: String,
    mode: &'static str,
    timeout_ms: u64,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            mode: "sentence",
            timeout_ms: 30_000,
        }
    }

    /// Same wire interface, per-token granularity flag.
    pub fn token_mode(mut self) -> Self {
        self.mode = "token";
        self
    }

    fn request(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let body = serde_json::json!({ "input": texts, "mode": self.mode });
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(self.timeout_ms))
            .build();
        let response = agent
            .post(&self.url)
            .set("Content-Type", "application/json")
            .send_string(&body.to_string())
            .map_err(|e| EmbedError::ProviderUnavailable(e.to_string()))?;
        let value: serde_json::Value = response
            .into_json()
            .map_err(|e| EmbedError::ProviderUnavailable(format!("invalid json: {e}")))?;
        let rows = value
            .get("embeddings")
            .and_then(|v| v.as_array())
            .ok_or_else(|| EmbedError::ProviderUnavailable("missing embeddings field".into()))?;
        if rows.len() != texts.len() {
            return Err(EmbedError::DimensionMismatch {
                expected: texts.len(),
                got: rows.len(),
            });
        }
        let mut out = Vec::with_capacity(rows.len());
        let mut dim: Option<usize> = None;
        for row in rows {
            let values: Vec<f64> = row
                .as_array()
                .ok_or_else(|| {
                    EmbedError::ProviderUnavailable("embedding row not an array".into())
                })?
                .iter()
                .map(|v| v.as_f64().unwrap_or(f64::NAN))
                .collect();
            let v = EmbeddingVector { values };
            if !v.is_finite() {
                return Err(EmbedError::NonFinite);
            }
            match dim {
                None => dim = Some(v.dim()),
                Some(d) if d != v.dim() => {
                    return Err(EmbedError::DimensionMismatch {
                        expected: d,
                        got: v.dim(),
                    })
                }
                _ => {}
            }
            out.push(v);
        }
        Ok(out)
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        Ok(self.request(&[text])?.remove(0))
    }

    fn embed_many(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        self.request(texts)
    }

    fn dim(&self) -> usize {
        0 // unknown until the provider answers; stores re-check on load
    }
}

/// Build an embedding provider from an `--embed-url` value.
pub fn embedder_from_url(
    url: &str,
) -> Result<Box<dyn EmbeddingProvider + Send + Sync>, BackendInitError> {
    if let Some(rest) = url.strip_prefix("mock:") {
        let dim = if rest.is_empty() {
            256
        } else {
            rest.parse()
                .map_err(|_| BackendInitError::BadUrl(url.to_string()))?
        };
        return Ok(Box::new(MockEmbedder::new(dim)));
    }
    if url == "mock" {
        return Ok(Box::new(MockEmbedder::new(256)));
    }
    if url.starts_with("http://") || url.starts_with("https://") {
        return Ok(Box::new(HttpEmbedder::new(url)));
    }
    Err(BackendInitError::BadUrl(url.to_string()))
}
