//! Speech-to-text client contract.
//!
//! Audio never reaches this crate; callers pass an audio reference and get a
//! transcript back. [`StubTranscriber`] resolves `fixture:<name>` references
//! from a fixed table and needs no network.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{HttpEndpoint, JsonClient};

pub const FIXTURE_PREFIX: &str = "fixture:";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TranscriptionError {
    #[error("unknown audio reference `{0}`")]
    UnknownAudio(String),
    #[error("transcription service unavailable: {0}")]
    Unavailable(String),
}

pub trait Transcriber: Send + Sync {
    fn transcribe(&self, audio_ref: &str) -> Result<String, TranscriptionError>;
}

impl<T: Transcriber + ?Sized> Transcriber for std::sync::Arc<T> {
    fn transcribe(&self, audio_ref: &str) -> Result<String, TranscriptionError> {
        (**self).transcribe(audio_ref)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TranscriberKind {
    RemoteHttp,
    Stub,
}

#[derive(Debug, Clone, Default)]
pub struct StubTranscriber {
    transcripts: BTreeMap<String, String>,
}

impl StubTranscriber {
    pub fn new(transcripts: BTreeMap<String, String>) -> Self {
        Self { transcripts }
    }

    /// Loads a JSON object mapping fixture names to transcripts.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, TranscriptionError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| TranscriptionError::Unavailable(format!("{}: {e}", path.display())))?;
        let map = serde_json::from_str(&text)
            .map_err(|e| TranscriptionError::Unavailable(format!("{}: {e}", path.display())))?;
        Ok(Self::new(map))
    }

    pub fn insert(&mut self, name: impl Into<String>, transcript: impl Into<String>) {
        self.transcripts.insert(name.into(), transcript.into());
    }
}

impl Transcriber for StubTranscriber {
    fn transcribe(&self, audio_ref: &str) -> Result<String, TranscriptionError> {
        audio_ref
            .strip_prefix(FIXTURE_PREFIX)
            .and_then(|name| self.transcripts.get(name))
            .cloned()
            .ok_or_else(|| TranscriptionError::UnknownAudio(audio_ref.to_string()))
    }
}

#[derive(Serialize)]
struct TranscribeRequest<'a> {
    audio_ref: &'a str,
}

#[derive(Deserialize)]
struct TranscribeResponse {
    transcript: String,
}

/// `POST {base_url}` with `{"audio_ref"}`, reply `{"transcript"}`.
pub struct HttpTranscriber {
    client: JsonClient,
}

impl HttpTranscriber {
    pub fn new(endpoint: HttpEndpoint) -> Self {
        Self {
            client: JsonClient::new(endpoint),
        }
    }
}

impl Transcriber for HttpTranscriber {
    fn transcribe(&self, audio_ref: &str) -> Result<String, TranscriptionError> {
        let resp: TranscribeResponse = self
            .client
            .post("", &TranscribeRequest { audio_ref })
            .map_err(TranscriptionError::Unavailable)?;
        Ok(resp.transcript)
    }
}

/// Drops each word of the inner transcript with probability `rate`. The
/// random stream depends only on `seed` and the audio reference.
pub struct WordDropTranscriber<T> {
    inner: T,
    rate: f64,
    seed: u64,
}

impl<T: Transcriber> WordDropTranscriber<T> {
    pub fn new(inner: T, rate: f64, seed: u64) -> Self {
        Self {
            inner,
            rate: rate.clamp(0.0, 1.0),
            seed,
        }
    }
}

pub fn drop_words(text: &str, rate: f64, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kept: Vec<&str> = text
        .split_whitespace()
        .filter(|_| !rng.gen_bool(rate.clamp(0.0, 1.0)))
        .collect();
    if kept.is_empty() {
        // never return an empty transcript; keep the first word
        text.split_whitespace().next().unwrap_or("").to_string()
    } else {
        kept.join(" ")
    }
}

impl<T: Transcriber> Transcriber for WordDropTranscriber<T> {
    fn transcribe(&self, audio_ref: &str) -> Result<String, TranscriptionError> {
        let text = self.inner.transcribe(audio_ref)?;
        let salt = audio_ref
            .bytes()
            .fold(0u64, |h, b| h.rotate_left(5) ^ u64::from(b));
        Ok(drop_words(&text, self.rate, self.seed ^ salt))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::testing::serve;

    #[test]
    fn stub_maps_fixture_names() {
        let mut t = StubTranscriber::default();
        t.insert("lumbar-01", "pain in the lower back");
        assert_eq!(t.transcribe("fixture:lumbar-01").unwrap(), "pain in the lower back");
        assert!(matches!(t.transcribe("fixture:nope"), Err(TranscriptionError::UnknownAudio(_))));
        assert!(t.transcribe("lumbar-01").is_err());
    }

    #[test]
    fn word_drop_is_seeded() {
        let text = "one two three four five six seven eight nine ten";
        assert_eq!(drop_words(text, 0.0, 1), text);
        assert_eq!(drop_words(text, 0.3, 9), drop_words(text, 0.3, 9));
        assert!(drop_words(text, 0.5, 3).split_whitespace().count() < 10);
        assert_eq!(drop_words(text, 1.0, 3), "one");
    }

    #[test]
    fn http_contract() {
        let (url, rx) = serve(vec![(200, r#"{"transcript": "hello"}"#.into())]);
        let t = HttpTranscriber::new(HttpEndpoint {
            base_url: url,
            timeout_ms: 2000,
            retries: 0,
            auth_token: None,
        });
        assert_eq!(t.transcribe("blob://1").unwrap(), "hello");
        let body: serde_json::Value = serde_json::from_str(&rx.recv().unwrap()).unwrap();
        assert_eq!(body, serde_json::json!({"audio_ref": "blob://1"}));
    }
}
