use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::turn::{FollowUpQuestion, Recommendation};
use super::TurnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvidenceKind {
    Utterance,
    UploadedEhr,
    TypedQuery,
    Answer,
}

impl EvidenceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EvidenceKind::Utterance => "utterance",
            EvidenceKind::UploadedEhr => "uploaded-ehr",
            EvidenceKind::TypedQuery => "typed-query",
            EvidenceKind::Answer => "answer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub kind: EvidenceKind,
    pub text: String,
    /// Monotonic ordering key within the session.
    pub timestamp: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionStatus {
    Collecting,
    AwaitingAnswer,
    Concluded,
}

/// Evidence gathered during one consultation plus the follow-up loop state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsultationSession {
    pub id: String,
    evidence: Vec<EvidenceItem>,
    status: SessionStatus,
    asked_features: BTreeSet<String>,
    rounds_used: u32,
    pending_question: Option<FollowUpQuestion>,
    latest_recommendation: Option<Recommendation>,
    next_timestamp: u64,
}

impl ConsultationSession {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            evidence: Vec::new(),
            status: SessionStatus::Collecting,
            asked_features: BTreeSet::new(),
            rounds_used: 0,
            pending_question: None,
            latest_recommendation: None,
            next_timestamp: 0,
        }
    }

    /// Appends evidence. While a follow-up question is pending, any input is
    /// recorded as its answer and the session returns to collecting.
    pub fn add_evidence(&mut self, kind: EvidenceKind, text: &str) -> Result<&EvidenceItem, TurnError> {
        if self.status == SessionStatus::Concluded {
            return Err(TurnError::Concluded);
        }
        let text = text.trim();
        if text.is_empty() {
            return Err(TurnError::EmptyEvidence);
        }
        let kind = if self.status == SessionStatus::AwaitingAnswer {
            self.status = SessionStatus::Collecting;
            self.pending_question = None;
            EvidenceKind::Answer
        } else {
            kind
        };
        self.evidence.push(EvidenceItem {
            kind,
            text: text.to_string(),
            timestamp: self.next_timestamp,
        });
        self.next_timestamp += 1;
        Ok(self.evidence.last().expect("just pushed"))
    }

    pub fn evidence(&self) -> &[EvidenceItem] {
        &self.evidence
    }

    /// Evidence texts joined in timestamp order.
    pub fn evidence_text(&self) -> String {
        let mut items: Vec<&EvidenceItem> = self.evidence.iter().collect();
        items.sort_by_key(|e| e.timestamp);
        items.iter().map(|e| e.text.as_str()).collect::<Vec<_>>().join("\n")
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn asked_features(&self) -> &BTreeSet<String> {
        &self.asked_features
    }

    pub fn rounds_used(&self) -> u32 {
        self.rounds_used
    }

    pub fn pending_question(&self) -> Option<&FollowUpQuestion> {
        self.pending_question.as_ref()
    }

    pub fn latest_recommendation(&self) -> Option<&Recommendation> {
        self.latest_recommendation.as_ref()
    }

    pub(crate) fn record_question(&mut self, question: FollowUpQuestion) {
        self.asked_features.insert(question.feature_id.clone());
        self.rounds_used += 1;
        self.status = SessionStatus::AwaitingAnswer;
        self.pending_question = Some(question);
    }

    pub(crate) fn conclude(&mut self, recommendation: Recommendation) {
        self.status = SessionStatus::Concluded;
        self.pending_question = None;
        self.latest_recommendation = Some(recommendation);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evidence_is_ordered_and_validated() {
        let mut s = ConsultationSession::new("s1");
        s.add_evidence(EvidenceKind::Utterance, "back pain").unwrap();
        s.add_evidence(EvidenceKind::TypedQuery, " worse when walking ").unwrap();
        assert_eq!(s.evidence()[1].text, "worse when walking");
        assert_eq!(s.evidence()[1].timestamp, 1);
        assert_eq!(s.evidence_text(), "back pain\nworse when walking");
        assert!(matches!(s.add_evidence(EvidenceKind::Utterance, "  "), Err(TurnError::EmptyEvidence)));
        assert_eq!(s.status(), SessionStatus::Collecting);
    }

    #[test]
    fn serde_round_trip() {
        let mut s = ConsultationSession::new("s1");
        s.add_evidence(EvidenceKind::UploadedEhr, "age: 47").unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: ConsultationSession = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert!(json.contains("\"uploaded-ehr\""));
    }
}
