//! The consultation turn loop: sufficiency check, discriminative follow-up
//! questions, prompt assembly and recommendation parsing.

mod parse;
mod prompt;
pub mod question;
mod session;
mod turn;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, DEFAULT_RETRIEVAL_K};
use crate::embedding::{EmbeddingError, Encoder};
use crate::index::{IndexError, VectorIndex};
use crate::kg::{DiagnosticKg, KgError};
use crate::llm::LlmError;
use crate::scalar::Scalar;

pub use parse::{parse_answer, LlmAnswer};
pub use prompt::{assemble_prompt, OracleLlm, PromptBundle, PromptSection};
pub use question::{
    detect_mentioned_features, formulate_question, select_critical_feature, template_question,
    LlmQuestionGenerator, QuestionGenerator, TemplateGenerator,
};
pub use session::{ConsultationSession, EvidenceItem, EvidenceKind, SessionStatus};
pub use turn::{FollowUpQuestion, Recommendation, SufficiencyVerdict, TurnMode, TurnOutcome};

#[derive(Debug, Error)]
pub enum TurnError {
    #[error("session is concluded")]
    Concluded,
    #[error("evidence text is empty")]
    EmptyEvidence,
    #[error("EmptySession: no evidence collected yet")]
    EmptySession,
    #[error("LlmUnavailable: {0}")]
    LlmUnavailable(LlmError),
    #[error("ParseFailure: {reason}")]
    ParseFailure { raw: String, reason: String },
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

impl TurnError {
    /// Whether the turn failed because an external service did, as opposed
    /// to bad input or session state.
    pub fn is_upstream(&self) -> bool {
        match self {
            TurnError::LlmUnavailable(_) | TurnError::ParseFailure { .. } => true,
            TurnError::Kg(KgError::Embedding(e))
            | TurnError::Corpus(CorpusError::Embedding(e))
            | TurnError::Corpus(CorpusError::Index(IndexError::Embedding(e))) => e.is_retriable(),
            _ => false,
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("corpus is not embedded")]
    CorpusNotEmbedded,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Kg(#[from] KgError),
}

/// Tunable thresholds of the turn loop. The defaults are calibrated for the
/// offline hashing encoder; other encoders need their own values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// EHRs retrieved per turn.
    pub k: usize,
    /// Minimum best retrieval score at which the loop stops asking.
    pub sufficiency_threshold: f64,
    /// Similarity at which a feature counts as already mentioned.
    pub mention_threshold: f64,
    /// Follow-up questions allowed per session.
    pub max_rounds: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_RETRIEVAL_K,
            sufficiency_threshold: 0.80,
            mention_threshold: 0.60,
            max_rounds: 5,
        }
    }
}

/// Read-only knowledge assets plus the encoder used to query them.
pub struct Engine<S: Scalar = f64> {
    corpus: Corpus<S>,
    index: VectorIndex<S>,
    kg: DiagnosticKg<S>,
    encoder: Arc<dyn Encoder<S>>,
    questions: Arc<dyn QuestionGenerator>,
    config: PipelineConfig,
}

impl<S: Scalar> Engine<S> {
    /// `corpus` must already be embedded with `encoder`.
    pub fn new(
        corpus: Corpus<S>,
        kg: DiagnosticKg<S>,
        encoder: Arc<dyn Encoder<S>>,
        config: PipelineConfig,
    ) -> Result<Self, EngineError> {
        let descriptor = encoder.descriptor();
        match corpus.encoder() {
            Some(d) if d == descriptor => {}
            Some(d) => {
                return Err(EmbeddingError::EncoderMismatch {
                    expected: d.name.clone(),
                    actual: descriptor.name.clone(),
                }
                .into())
            }
            None if corpus.is_empty() => {}
            None => return Err(EngineError::CorpusNotEmbedded),
        }
        if let Some(d) = kg.encoder() {
            if d != descriptor {
                return Err(EmbeddingError::EncoderMismatch {
                    expected: d.name.clone(),
                    actual: descriptor.name.clone(),
                }
                .into());
            }
        }
        let index = if corpus.is_empty() {
            VectorIndex::build(descriptor.clone(), Vec::new()).map_err(CorpusError::from)?
        } else {
            corpus.build_index()?
        };
        Ok(Self {
            corpus,
            index,
            kg,
            encoder,
            questions: Arc::new(TemplateGenerator),
            config,
        })
    }

    pub fn with_question_generator(mut self, generator: Arc<dyn QuestionGenerator>) -> Self {
        self.questions = generator;
        self
    }

    pub fn corpus(&self) -> &Corpus<S> {
        &self.corpus
    }

    pub fn index(&self) -> &VectorIndex<S> {
        &self.index
    }

    pub fn kg(&self) -> &DiagnosticKg<S> {
        &self.kg
    }

    pub fn encoder(&self) -> &dyn Encoder<S> {
        &*self.encoder
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }
}
