//! Service configuration: a TOML file plus `MEDRAG_*` environment overrides.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use medrag_core::embedding::{Encoder, HashingEncoder, RemoteEncoder, RemoteEncoderConfig, DEFAULT_OFFLINE_DIMENSION};
use medrag_core::kg::{DiagnosticKg, KgConfig, RuleBasedExtractor};
use medrag_core::llm::{HttpLlmClient, HttpLlmConfig, LlmClient, ReplayLlm};
use medrag_core::orchestrator::{Engine, LlmQuestionGenerator, OracleLlm, PipelineConfig};
use medrag_core::transcribe::{HttpTranscriber, StubTranscriber, Transcriber};
use medrag_core::{Corpus, HttpEndpoint};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("asset loading failed: {0}")]
    Assets(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EncoderConfig {
    Offline {
        #[serde(default = "default_dimension")]
        dimension: usize,
    },
    Remote(RemoteEncoderConfig),
}

fn default_dimension() -> usize {
    DEFAULT_OFFLINE_DIMENSION
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig::Offline {
            dimension: DEFAULT_OFFLINE_DIMENSION,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LlmConfig {
    /// Answers from recorded fixtures; unknown prompts fail as unavailable.
    Replay { fixtures: PathBuf },
    /// Echoes the diagnosis of the top retrieved record.
    #[default]
    Oracle,
    Http(HttpLlmConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TranscriberConfig {
    Stub {
        #[serde(default)]
        fixtures: Option<PathBuf>,
    },
    Http(HttpEndpoint),
}

impl Default for TranscriberConfig {
    fn default() -> Self {
        TranscriberConfig::Stub { fixtures: None }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuestionStyle {
    #[default]
    Template,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    pub corpus: PathBuf,
    /// Prebuilt graph. Built from the corpus at startup when absent.
    #[serde(default)]
    pub kg: Option<PathBuf>,
    #[serde(default)]
    pub auth_token: Option<String>,
    #[serde(default)]
    pub session_log: Option<PathBuf>,
    #[serde(default)]
    pub questions: QuestionStyle,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub transcriber: TranscriberConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub kg_build: KgConfig,
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

/// Resolved backends the HTTP layer runs turns against.
pub struct Assets {
    pub engine: Arc<Engine>,
    pub llm: Arc<dyn LlmClient>,
    pub transcriber: Arc<dyn Transcriber>,
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Reads `path` and applies overrides from the process environment.
    /// Relative asset paths resolve against the config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut config = Self::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            config.resolve_relative(dir);
        }
        config.apply_env(|k| std::env::var(k).ok())?;
        Ok(config)
    }

    fn resolve_relative(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        fix(&mut self.corpus);
        if let Some(p) = self.kg.as_mut() {
            fix(p);
        }
        if let Some(p) = self.session_log.as_mut() {
            fix(p);
        }
        if let LlmConfig::Replay { fixtures } = &mut self.llm {
            fix(fixtures);
        }
        if let TranscriberConfig::Stub { fixtures: Some(p) } = &mut self.transcriber {
            fix(p);
        }
    }

    /// Recognized variables: `MEDRAG_BIND`, `MEDRAG_CORPUS`, `MEDRAG_KG`,
    /// `MEDRAG_AUTH_TOKEN`, `MEDRAG_SESSION_LOG`, `MEDRAG_LLM` (`oracle`,
    /// `replay:<fixtures>` or `http:<base-url>`) and `MEDRAG_LLM_MODEL`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = lookup("MEDRAG_BIND") {
            self.bind = v;
        }
        if let Some(v) = lookup("MEDRAG_CORPUS") {
            self.corpus = v.into();
        }
        if let Some(v) = lookup("MEDRAG_KG") {
            self.kg = Some(v.into());
        }
        if let Some(v) = lookup("MEDRAG_AUTH_TOKEN") {
            self.auth_token = Some(v).filter(|t| !t.is_empty());
        }
        if let Some(v) = lookup("MEDRAG_SESSION_LOG") {
            self.session_log = Some(v.into());
        }
        if let Some(v) = lookup("MEDRAG_LLM") {
            self.llm = match v.split_once(':') {
                None if v == "oracle" => LlmConfig::Oracle,
                Some(("replay", path)) => LlmConfig::Replay { fixtures: path.into() },
                Some(("http", url)) => LlmConfig::Http(HttpLlmConfig {
                    endpoint: HttpEndpoint {
                        base_url: url.to_string(),
                        ..HttpEndpoint::default()
                    },
                    model: lookup("MEDRAG_LLM_MODEL").unwrap_or_default(),
                }),
                _ => return Err(ConfigError::Invalid(format!("MEDRAG_LLM=`{v}`"))),
            };
        } else if let (Some(m), LlmConfig::Http(c)) = (lookup("MEDRAG_LLM_MODEL"), &mut self.llm) {
            c.model = m;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.bind.trim().is_empty() {
            return Err(ConfigError::Invalid("bind address is empty".into()));
        }
        let p = &self.pipeline;
        if p.k == 0 {
            return Err(ConfigError::Invalid("pipeline.k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&p.sufficiency_threshold) || !(0.0..=1.0).contains(&p.mention_threshold) {
            return Err(ConfigError::Invalid("pipeline thresholds must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Loads the corpus, embeds it, loads or builds the graph and connects
    /// the model backends. Blocking; may call remote encoders.
    pub fn load_assets(&self) -> Result<Assets, ConfigError> {
        let asset = |e: &dyn std::fmt::Display| ConfigError::Assets(e.to_string());
        let encoder: Arc<dyn Encoder<f64>> = match &self.encoder {
            EncoderConfig::Offline { dimension } => Arc::new(HashingEncoder::new(*dimension)),
            EncoderConfig::Remote(c) => Arc::new(RemoteEncoder::new(c.clone())),
        };
        let corpus = Corpus::ingest(&self.corpus)
            .and_then(|c| c.embed(&*encoder))
            .map_err(|e| asset(&e))?;
        let kg = match &self.kg {
            Some(path) => DiagnosticKg::load(path).map_err(|e| asset(&e))?,
            None => {
                DiagnosticKg::build(&corpus, &self.kg_build, &RuleBasedExtractor).map_err(|e| asset(&e))?
            }
        };
        let llm: Arc<dyn LlmClient> = match &self.llm {
            LlmConfig::Replay { fixtures } => Arc::new(ReplayLlm::from_file(fixtures).map_err(|e| asset(&e))?),
            LlmConfig::Oracle => Arc::new(OracleLlm),
            LlmConfig::Http(c) => Arc::new(HttpLlmClient::new(c.clone())),
        };
        let transcriber: Arc<dyn Transcriber> = match &self.transcriber {
            TranscriberConfig::Stub { fixtures: None } => Arc::new(StubTranscriber::default()),
            TranscriberConfig::Stub { fixtures: Some(p) } => {
                Arc::new(StubTranscriber::from_file(p).map_err(|e| asset(&e))?)
            }
            TranscriberConfig::Http(endpoint) => Arc::new(HttpTranscriber::new(endpoint.clone())),
        };
        let mut engine = Engine::new(corpus, kg, encoder, self.pipeline).map_err(|e| asset(&e))?;
        if self.questions == QuestionStyle::Llm {
            engine = engine.with_question_generator(Arc::new(LlmQuestionGenerator::new(llm.clone())));
        }
        Ok(Assets {
            engine: Arc::new(engine),
            llm,
            transcriber,
        })
    }
}
