//! Backbone LLM client contract, HTTP client and record/replay fixtures.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::http::{HttpEndpoint, JsonClient};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("LLM unavailable: {0}")]
    Unavailable(String),
    #[error("no recorded fixture for prompt {0}")]
    FixtureMissing(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

/// Hex SHA-256 of the canonical JSON encoding of `messages`. Fixture key.
pub fn prompt_key(messages: &[ChatMessage]) -> String {
    let json = serde_json::to_vec(messages).expect("messages serialize");
    hex::encode(Sha256::digest(&json))
}

pub trait LlmClient: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError>;
}

impl<L: LlmClient + ?Sized> LlmClient for std::sync::Arc<L> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        (**self).complete(messages)
    }
}

impl<L: LlmClient + ?Sized> LlmClient for Box<L> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        (**self).complete(messages)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpLlmConfig {
    #[serde(flatten)]
    pub endpoint: HttpEndpoint,
    pub model: String,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
}

#[derive(Deserialize)]
struct ChatResponse {
    content: String,
}

/// Chat-completion client: `POST {base_url}` with `{"model", "messages"}`,
/// reply `{"content"}`.
pub struct HttpLlmClient {
    model: String,
    client: JsonClient,
}

impl HttpLlmClient {
    pub fn new(config: HttpLlmConfig) -> Self {
        Self {
            model: config.model,
            client: JsonClient::new(config.endpoint),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.client.endpoint().base_url
    }
}

impl LlmClient for HttpLlmClient {
    fn name(&self) -> &str {
        &self.model
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let resp: ChatResponse = self
            .client
            .post(
                "",
                &ChatRequest {
                    model: &self.model,
                    messages,
                },
            )
            .map_err(LlmError::Unavailable)?;
        Ok(resp.content)
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct FixtureFile {
    fixtures: BTreeMap<String, String>,
}

fn read_fixtures(path: &Path) -> Result<BTreeMap<String, String>, LlmError> {
    let text = fs::read_to_string(path)
        .map_err(|e| LlmError::Unavailable(format!("{}: {e}", path.display())))?;
    let file: FixtureFile = serde_json::from_str(&text)
        .map_err(|e| LlmError::Unavailable(format!("{}: {e}", path.display())))?;
    Ok(file.fixtures)
}

/// Answers from recorded completions keyed by [`prompt_key`].
#[derive(Debug, Clone, Default)]
pub struct ReplayLlm {
    fixtures: BTreeMap<String, String>,
}

impl ReplayLlm {
    pub fn new(fixtures: BTreeMap<String, String>) -> Self {
        Self { fixtures }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        Ok(Self::new(read_fixtures(path.as_ref())?))
    }

    pub fn len(&self) -> usize {
        self.fixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }
}

impl LlmClient for ReplayLlm {
    fn name(&self) -> &str {
        "replay"
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let key = prompt_key(messages);
        self.fixtures
            .get(&key)
            .cloned()
            .ok_or(LlmError::FixtureMissing(key))
    }
}

/// Forwards to `inner` and stores every completion in a fixture file that
/// [`ReplayLlm`] can load. Existing entries in the file are kept.
pub struct RecordingLlm<L> {
    inner: L,
    path: PathBuf,
    recorded: Mutex<BTreeMap<String, String>>,
}

impl<L: LlmClient> RecordingLlm<L> {
    pub fn new(inner: L, path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        let existing = read_fixtures(&path).unwrap_or_default();
        Self {
            inner,
            path,
            recorded: Mutex::new(existing),
        }
    }
}

impl<L: LlmClient> LlmClient for RecordingLlm<L> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let content = self.inner.complete(messages)?;
        let mut map = self.recorded.lock().expect("fixture lock");
        map.insert(prompt_key(messages), content.clone());
        let file = FixtureFile {
            fixtures: map.clone(),
        };
        let json = serde_json::to_string_pretty(&file).expect("fixtures serialize");
        fs::write(&self.path, json + "\n")
            .map_err(|e| LlmError::Unavailable(format!("recording to {}: {e}", self.path.display())))?;
        Ok(content)
    }
}

/// Always returns the same text.
#[derive(Debug, Clone)]
pub struct StaticLlm(pub String);

impl LlmClient for StaticLlm {
    fn name(&self) -> &str {
        "static"
    }

    fn complete(&self, _messages: &[ChatMessage]) -> Result<String, LlmError> {
        Ok(self.0.clone())
    }
}

/// Always fails, as a backend that is down would.
#[derive(Debug, Clone, Default)]
pub struct UnavailableLlm;

impl LlmClient for UnavailableLlm {
    fn name(&self) -> &str {
        "unavailable"
    }

    fn complete(&self, _messages: &[ChatMessage]) -> Result<String, LlmError> {
        Err(LlmError::Unavailable("backend is down".into()))
    }
}
