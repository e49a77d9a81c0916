use serde::{Deserialize, Serialize};

use super::parse::parse_answer;
use super::prompt::{assemble_prompt, PromptBundle};
use super::question::{detect_mentioned_features, formulate_question, select_critical_feature};
use super::session::ConsultationSession;
use super::{Engine, TurnError};
use crate::index::ScoredHit;
use crate::kg::{label_of, Triplet};
use crate::llm::LlmClient;
use crate::scalar::Scalar;

/// Whether the best retrieval score clears the sufficiency threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SufficiencyVerdict {
    pub sufficient: bool,
    pub max_score: f64,
    pub threshold: f64,
}

impl SufficiencyVerdict {
    /// `max_score` is `None` for an empty corpus, which is never sufficient.
    pub fn new(max_score: Option<f64>, threshold: f64) -> Self {
        let max_score = max_score.unwrap_or(-1.0);
        Self {
            sufficient: max_score >= threshold,
            max_score,
            threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowUpQuestion {
    pub question: String,
    pub feature_id: String,
    pub feature_label: String,
    pub subcategory: String,
    pub verdict: SufficiencyVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub diagnosis: String,
    pub treatment: Option<String>,
    pub medication: Option<String>,
    pub follow_up_question: Option<String>,
    pub supporting_ehr_ids: Vec<String>,
    pub supporting_scores: Vec<f64>,
    pub supporting_triplets: Vec<Triplet>,
    pub subcategory: String,
    pub verdict: SufficiencyVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum TurnOutcome {
    FollowUp(FollowUpQuestion),
    Recommendation(Recommendation),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TurnMode {
    /// Ask follow-up questions while evidence is insufficient.
    #[default]
    Interactive,
    /// Always produce a recommendation (one-shot queries, evaluation).
    RecommendOnly,
}

impl<S: Scalar> Engine<S> {
    fn retrieve(&self, text: &str) -> Result<Vec<ScoredHit<S>>, TurnError> {
        let query = self.encoder.encode(text).map_err(crate::corpus::CorpusError::from)?;
        Ok(self
            .index
            .top_k(&query, self.config.k)
            .map_err(crate::corpus::CorpusError::from)?)
    }

    /// Embeds all evidence and compares the best retrieval score with the
    /// sufficiency threshold.
    pub fn check_sufficiency(&self, session: &ConsultationSession) -> Result<SufficiencyVerdict, TurnError> {
        if session.evidence().is_empty() {
            return Err(TurnError::EmptySession);
        }
        let hits = self.retrieve(&session.evidence_text())?;
        Ok(SufficiencyVerdict::new(
            hits.first().map(|h| h.score.as_f64()),
            self.config.sufficiency_threshold,
        ))
    }

    fn critical_feature(&self, session: &ConsultationSession, subcategory: &str) -> Result<Option<String>, TurnError> {
        let candidates = self.kg.diseases_under(subcategory)?;
        let mentioned = detect_mentioned_features(
            &self.kg,
            &*self.encoder,
            session.evidence(),
            session.asked_features(),
            &candidates,
            self.config.mention_threshold,
        );
        Ok(select_critical_feature(&self.kg, subcategory, &mentioned)?)
    }

    /// The prompt a recommendation turn would send for `session`.
    pub fn prompt_for(&self, session: &ConsultationSession) -> Result<PromptBundle, TurnError> {
        let text = session.evidence_text();
        let hits = self.retrieve(&text)?;
        let subcategory = self.kg.match_subcategory(&*self.encoder, &text)?;
        let triplets = self.kg.gather_triplets(&subcategory)?;
        let retrieved = self.join(&hits);
        Ok(assemble_prompt(session.evidence(), &retrieved, &triplets))
    }

    fn join<'a>(&'a self, hits: &[ScoredHit<S>]) -> Vec<(&'a crate::corpus::EhrRecord<S>, S)> {
        hits.iter()
            .filter_map(|h| self.corpus.get(&h.record_id).map(|r| (r, h.score)))
            .collect()
    }

    /// Runs one turn of the consultation loop.
    ///
    /// Insufficient evidence with rounds left and an unmentioned
    /// discriminating feature yields a follow-up question; otherwise the
    /// backbone LLM is prompted with the retrieved EHRs and the matched
    /// subcategory's triplets. The session is only modified on success.
    pub fn run_turn(
        &self,
        session: &mut ConsultationSession,
        llm: &dyn LlmClient,
        mode: TurnMode,
    ) -> Result<TurnOutcome, TurnError> {
        if session.status() == super::SessionStatus::Concluded {
            return Err(TurnError::Concluded);
        }
        if session.evidence().is_empty() {
            return Err(TurnError::EmptySession);
        }
        let text = session.evidence_text();
        let hits = self.retrieve(&text)?;
        let verdict = SufficiencyVerdict::new(
            hits.first().map(|h| h.score.as_f64()),
            self.config.sufficiency_threshold,
        );
        let subcategory = self.kg.match_subcategory(&*self.encoder, &text)?;
        let critical = if verdict.sufficient {
            None
        } else {
            self.critical_feature(session, &subcategory)?
        };

        if mode == TurnMode::Interactive && !verdict.sufficient && session.rounds_used() < self.config.max_rounds {
            if let Some(feature) = &critical {
                let label = label_of(feature).to_string();
                let q = FollowUpQuestion {
                    question: formulate_question(&label, &*self.questions),
                    feature_id: feature.clone(),
                    feature_label: label,
                    subcategory,
                    verdict,
                };
                session.record_question(q.clone());
                return Ok(TurnOutcome::FollowUp(q));
            }
        }

        let triplets = self.kg.gather_triplets(&subcategory)?;
        let retrieved = self.join(&hits);
        let prompt = assemble_prompt(session.evidence(), &retrieved, &triplets);
        let raw = llm.complete(&prompt.messages()).map_err(TurnError::LlmUnavailable)?;
        let answer = parse_answer(&raw).map_err(|reason| TurnError::ParseFailure { raw: raw.clone(), reason })?;
        let follow_up_question = answer.follow_up_question.or_else(|| {
            critical.map(|f| formulate_question(label_of(&f), &*self.questions))
        });
        let rec = Recommendation {
            diagnosis: answer.diagnosis,
            treatment: answer.treatment,
            medication: answer.medication,
            follow_up_question,
            supporting_ehr_ids: retrieved.iter().map(|(r, _)| r.id.clone()).collect(),
            supporting_scores: retrieved.iter().map(|(_, s)| s.as_f64()).collect(),
            supporting_triplets: triplets,
            subcategory,
            verdict,
        };
        session.conclude(rec.clone());
        Ok(TurnOutcome::Recommendation(rec))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_boundary_is_inclusive() {
        assert!(SufficiencyVerdict::new(Some(0.9), 0.8).sufficient);
        assert!(!SufficiencyVerdict::new(Some(0.5), 0.8).sufficient);
        assert!(SufficiencyVerdict::new(Some(0.8), 0.8).sufficient);
        assert!(!SufficiencyVerdict::new(None, 0.8).sufficient);
    }
}
