//! Hierarchical accuracy evaluation.
//!
//! L1, L2 and L3 are top-1 accuracies at category, subcategory and disease
//! level. A prediction counts at L2/L1 when the predicted disease sits under
//! the gold subcategory/category in the knowledge graph. Matching is exact
//! after trimming and case folding.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{DiagnosticKg, Tier};
use crate::llm::LlmClient;
use crate::orchestrator::{ConsultationSession, Engine, EvidenceKind, TurnError, TurnMode, TurnOutcome};
use crate::scalar::Scalar;
use crate::transcribe::{StubTranscriber, Transcriber, WordDropTranscriber, FIXTURE_PREFIX};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("UnresolvableGoldLabel: case `{0}`")]
    UnresolvableGoldLabel(String),
    #[error("MalformedCase at line {line}: {reason}")]
    MalformedCase { line: usize, reason: String },
    #[error("IoError: {0}")]
    Io(String),
    #[error("upstream failure on case `{case_id}`: {message}")]
    Upstream { case_id: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCase {
    pub case_id: String,
    pub input_text: String,
    pub gold_category: String,
    pub gold_subcategory: String,
    pub gold_diagnosis: String,
}

impl EvalCase {
    fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("case_id", &self.case_id),
            ("input_text", &self.input_text),
            ("gold_category", &self.gold_category),
            ("gold_subcategory", &self.gold_subcategory),
            ("gold_diagnosis", &self.gold_diagnosis),
        ] {
            if v.trim().is_empty() {
                return Err(format!("{name} must be non-empty"));
            }
        }
        Ok(())
    }
}

pub fn parse_cases(text: &str) -> Result<Vec<EvalCase>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let case: EvalCase = serde_json::from_str(line).map_err(|e| EvalError::MalformedCase {
            line: i + 1,
            reason: e.to_string(),
        })?;
        case.validate()
            .map_err(|reason| EvalError::MalformedCase { line: i + 1, reason })?;
        out.push(case);
    }
    Ok(out)
}

pub fn load_cases(path: impl AsRef<Path>) -> Result<Vec<EvalCase>, EvalError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| EvalError::Io(format!("{}: {e}", path.display())))?;
    parse_cases(&text)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "modal", rename_all = "lowercase")]
pub enum Modality {
    Text,
    /// Input text is played through the stub transcriber with word drops.
    Voice { noise_rate: f64, seed: u64 },
}

impl Modality {
    pub fn name(&self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Voice { .. } => "voice",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub case_id: String,
    pub predicted_diagnosis: Option<String>,
    pub l1: bool,
    pub l2: bool,
    pub l3: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pipeline: String,
    pub modal: String,
    pub n_cases: usize,
    pub l1_accuracy: f64,
    pub l2_accuracy: f64,
    pub l3_accuracy: f64,
    pub rows: Vec<EvalRow>,
}

fn norm(s: &str) -> String {
    s.trim().to_lowercase()
}

fn resolve_gold<S: Scalar>(kg: &DiagnosticKg<S>, case: &EvalCase) -> Result<(), EvalError> {
    let ok = kg.find_by_label(Tier::Category, &case.gold_category).is_some()
        && kg.find_by_label(Tier::Subcategory, &case.gold_subcategory).is_some()
        && kg.find_by_label(Tier::Disease, &case.gold_diagnosis).is_some();
    if ok {
        Ok(())
    } else {
        Err(EvalError::UnresolvableGoldLabel(case.case_id.clone()))
    }
}

/// Category and subcategory labels above a predicted disease, if the
/// prediction names a disease in the graph.
fn lineage<S: Scalar>(kg: &DiagnosticKg<S>, diagnosis: &str) -> Option<(String, String)> {
    let d = kg.find_by_label(Tier::Disease, diagnosis)?;
    let sub = kg.parent(&d.id)?;
    let cat = kg.parent(sub)?;
    Some((kg.node(cat)?.label.clone(), kg.node(sub)?.label.clone()))
}

fn score_row<S: Scalar>(kg: &DiagnosticKg<S>, case: &EvalCase, predicted: Option<String>, error: Option<String>) -> EvalRow {
    let (mut l1, mut l2, mut l3) = (false, false, false);
    if let Some(p) = &predicted {
        l3 = norm(p) == norm(&case.gold_diagnosis);
        if let Some((cat, sub)) = lineage(kg, p) {
            l2 = norm(&sub) == norm(&case.gold_subcategory);
            l1 = norm(&cat) == norm(&case.gold_category);
        }
    }
    EvalRow {
        case_id: case.case_id.clone(),
        predicted_diagnosis: predicted,
        l1,
        l2,
        l3,
        error,
    }
}

fn percent(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * hits as f64 / n as f64
    }
}

/// Runs every case through the recommendation path (no follow-up loop) and
/// scores the top-1 diagnosis. An unreachable LLM aborts the run; a reply
/// that does not parse counts as a miss with the reason on its row.
pub fn evaluate<S: Scalar>(
    engine: &Engine<S>,
    llm: &dyn LlmClient,
    cases: &[EvalCase],
    pipeline: &str,
    modality: Modality,
) -> Result<EvalReport, EvalError> {
    for c in cases {
        resolve_gold(engine.kg(), c)?;
    }
    let transcriber: Option<Box<dyn Transcriber>> = match modality {
        Modality::Text => None,
        Modality::Voice { noise_rate, seed } => {
            let stub = StubTranscriber::new(
                cases.iter().map(|c| (c.case_id.clone(), c.input_text.clone())).collect(),
            );
            Some(Box::new(WordDropTranscriber::new(stub, noise_rate, seed)))
        }
    };

    let mut rows = BTreeMap::new();
    for case in cases {
        let input = match &transcriber {
            None => case.input_text.clone(),
            Some(t) => t
                .transcribe(&format!("{FIXTURE_PREFIX}{}", case.case_id))
                .map_err(|e| EvalError::Upstream {
                    case_id: case.case_id.clone(),
                    message: e.to_string(),
                })?,
        };
        let mut session = ConsultationSession::new(format!("eval-{}", case.case_id));
        let outcome = match session.add_evidence(EvidenceKind::TypedQuery, &input) {
            Ok(_) => engine.run_turn(&mut session, llm, TurnMode::RecommendOnly),
            Err(e) => Err(e),
        };
        let row = match outcome {
            Ok(TurnOutcome::Recommendation(r)) => score_row(engine.kg(), case, Some(r.diagnosis), None),
            Ok(TurnOutcome::FollowUp(_)) => unreachable!("recommend-only turns never ask"),
            Err(TurnError::LlmUnavailable(e)) => {
                return Err(EvalError::Upstream {
                    case_id: case.case_id.clone(),
                    message: e.to_string(),
                })
            }
            Err(e) => score_row(engine.kg(), case, None, Some(e.to_string())),
        };
        rows.insert(case.case_id.clone(), row);
    }
    let rows: Vec<EvalRow> = rows.into_values().collect();
    let n = rows.len();
    let count = |f: fn(&EvalRow) -> bool| rows.iter().filter(|r| f(r)).count();
    Ok(EvalReport {
        pipeline: pipeline.to_string(),
        modal: modality.name().to_string(),
        n_cases: n,
        l1_accuracy: percent(count(|r| r.l1), n),
        l2_accuracy: percent(count(|r| r.l2), n),
        l3_accuracy: percent(count(|r| r.l3), n),
        rows,
    })
}

/// Aligned text table, one row per report: pipeline, modal, L1, L2, L3.
pub fn render_table(reports: &[EvalReport]) -> String {
    let w = reports
        .iter()
        .map(|r| r.pipeline.len())
        .chain(["Backbone LLM".len()])
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(out, "{:<w$}  {:<5}  {:>6}  {:>6}  {:>6}", "Backbone LLM", "Modal", "L1", "L2", "L3");
    for r in reports {
        let _ = writeln!(
            out,
            "{:<w$}  {:<5}  {:>6.2}  {:>6.2}  {:>6.2}",
            r.pipeline, r.modal, r.l1_accuracy, r.l2_accuracy, r.l3_accuracy
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_validation() {
        let good = r#"{"case_id":"c1","input_text":"x","gold_category":"a","gold_subcategory":"b","gold_diagnosis":"d"}"#;
        assert_eq!(parse_cases(good).unwrap().len(), 1);
        let bad = r#"{"case_id":"c1","input_text":"x","gold_category":"","gold_subcategory":"b","gold_diagnosis":"d"}"#;
        assert!(matches!(parse_cases(bad), Err(EvalError::MalformedCase { line: 1, .. })));
        assert!(parse_cases("{\"case_id\": 1}").is_err());
    }

    #[test]
    fn table_layout() {
        let r = EvalReport {
            pipeline: "oracle-stub".into(),
            modal: "text".into(),
            n_cases: 2,
            l1_accuracy: 100.0,
            l2_accuracy: 50.0,
            l3_accuracy: 50.0,
            rows: vec![],
        };
        let t = render_table(&[r]);
        let header: Vec<_> = t.lines().next().unwrap().split_whitespace().collect();
        assert_eq!(&header[header.len() - 3..], ["L1", "L2", "L3"]);
        assert!(t.lines().nth(1).unwrap().contains("100.00   50.00   50.00"));
    }

    #[test]
    fn report_json_round_trip() {
        let r = EvalReport {
            pipeline: "p".into(),
            modal: "voice".into(),
            n_cases: 1,
            l1_accuracy: 100.0,
            l2_accuracy: 0.0,
            l3_accuracy: 0.0,
            rows: vec![EvalRow {
                case_id: "c".into(),
                predicted_diagnosis: None,
                l1: true,
                l2: false,
                l3: false,
                error: Some("x".into()),
            }],
        };
        let back: EvalReport = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
