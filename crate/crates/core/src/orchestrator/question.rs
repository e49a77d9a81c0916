//! Choosing and phrasing the follow-up question.

use std::collections::{BTreeMap, BTreeSet};

use super::session::EvidenceItem;
use crate::embedding::{cosine_similarity, EmbeddingVector, Encoder};
use crate::kg::{label_of, DiagnosticKg, KgError, Tier};
use crate::llm::{ChatMessage, LlmClient, LlmError};
use crate::scalar::Scalar;

/// Features of `candidates` the consultation already covers: any feature
/// whose label embedding reaches `threshold` cosine similarity with some
/// evidence item, plus every feature already asked about.
pub fn detect_mentioned_features<S: Scalar, E: Encoder<S> + ?Sized>(
    kg: &DiagnosticKg<S>,
    encoder: &E,
    evidence: &[EvidenceItem],
    asked: &BTreeSet<String>,
    candidates: &[&str],
    threshold: f64,
) -> BTreeSet<String> {
    let evidence_vecs: Vec<EmbeddingVector<S>> = evidence
        .iter()
        .filter_map(|e| encoder.encode(&e.text).ok())
        .collect();
    let mut features = BTreeSet::new();
    for d in candidates {
        features.extend(kg.features_of(d));
    }
    let mut out = BTreeSet::new();
    for f in features {
        if asked.contains(f) {
            out.insert(f.to_string());
            continue;
        }
        let Ok(fv) = encoder.encode(label_of(f)) else { continue };
        let hit = evidence_vecs
            .iter()
            .filter_map(|ev| cosine_similarity(&fv, ev).ok())
            .any(|s| s.as_f64() >= threshold);
        if hit {
            out.insert(f.to_string());
        }
    }
    out
}

/// The unmentioned feature that best splits the diseases of `subcategory`.
///
/// With `n` sibling diseases and a feature present in `c` of them the split
/// score is `p(1 - p)` for `p = c / n`. Since `n` is fixed this ranks the
/// same as the integer `c * (n - c)`, which is what is compared. Ties go to
/// the lowest feature id. Returns `None` when there is at most one disease or
/// nothing left to ask.
pub fn select_critical_feature<S: Scalar>(
    kg: &DiagnosticKg<S>,
    subcategory: &str,
    mentioned: &BTreeSet<String>,
) -> Result<Option<String>, KgError> {
    let diseases = kg.diseases_under(subcategory)?;
    let n = diseases.len();
    if n <= 1 {
        return Ok(None);
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for d in &diseases {
        for f in kg.features_of(d) {
            if !mentioned.contains(f) {
                *counts.entry(f).or_default() += 1;
            }
        }
    }
    let mut best: Option<(usize, &str)> = None;
    for (f, c) in counts {
        let score = c * (n - c);
        if best.is_none_or(|(b, _)| score > b) {
            best = Some((score, f));
        }
    }
    Ok(best.map(|(_, f)| f.to_string()))
}

/// Turns a feature label into a question for the patient.
pub trait QuestionGenerator: Send + Sync {
    fn generate(&self, feature_label: &str) -> Result<String, LlmError>;
}

pub fn template_question(feature_label: &str) -> String {
    format!("Does the patient have {feature_label}?")
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateGenerator;

impl QuestionGenerator for TemplateGenerator {
    fn generate(&self, feature_label: &str) -> Result<String, LlmError> {
        Ok(template_question(feature_label))
    }
}

/// Lets the backbone LLM phrase the question naturally.
pub struct LlmQuestionGenerator<L> {
    llm: L,
}

impl<L: LlmClient> LlmQuestionGenerator<L> {
    pub fn new(llm: L) -> Self {
        Self { llm }
    }

    pub fn prompt(feature_label: &str) -> Vec<ChatMessage> {
        vec![
            ChatMessage::system(
                "You help a doctor during a consultation. Phrase one short follow-up question \
                 the doctor can ask the patient. Reply with the question only.",
            ),
            ChatMessage::user(format!(
                "Ask whether the patient has this clinical feature: {feature_label}"
            )),
        ]
    }
}

impl<L: LlmClient> QuestionGenerator for LlmQuestionGenerator<L> {
    fn generate(&self, feature_label: &str) -> Result<String, LlmError> {
        let reply = self.llm.complete(&Self::prompt(feature_label))?;
        Ok(reply.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("").to_string())
    }
}

/// Phrases a question for `feature_label`, falling back to the template when
/// the generator fails or returns nothing.
pub fn formulate_question<G: QuestionGenerator + ?Sized>(feature_label: &str, generator: &G) -> String {
    match generator.generate(feature_label) {
        Ok(q) if !q.trim().is_empty() => q.trim().to_string(),
        _ => template_question(feature_label),
    }
}

/// Features of the subcategory that are linked to a disease, for tests and
/// callers that want the raw incidence.
pub fn incidence<S: Scalar>(
    kg: &DiagnosticKg<S>,
    subcategory: &str,
) -> Result<BTreeMap<String, BTreeSet<String>>, KgError> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for d in kg.diseases_under(subcategory)? {
        for f in kg.neighbors_in(d, Tier::Feature) {
            out.entry(f.to_string()).or_default().insert(d.to_string());
        }
    }
    Ok(out)
}
