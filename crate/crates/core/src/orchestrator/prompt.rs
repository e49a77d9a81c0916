//! Prompt layout handed to the backbone LLM.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::session::EvidenceItem;
use crate::corpus::EhrRecord;
use crate::kg::Triplet;
use crate::llm::{prompt_key, ChatMessage, LlmClient, LlmError};
use crate::scalar::Scalar;

pub const SYSTEM_INSTRUCTION: &str = "You are a clinical decision-support copilot assisting a doctor. \
Reason over the patient evidence, the similar electronic health records and the knowledge-graph \
triplets below. The triplets list the features of diseases that are easily confused with each \
other; use them to tell those diseases apart. Recommend the single most likely diagnosis, and \
where useful a treatment, a medication and one follow-up question that would best confirm or \
rule out the diagnosis.";

pub const OUTPUT_INSTRUCTION: &str = "Respond with one fenced JSON object and nothing else of substance:\n\
```json\n\
{\"diagnosis\": \"...\", \"treatment\": \"...\", \"medication\": \"...\", \"follow_up_question\": \"...\"}\n\
```\n\
`diagnosis` is required. Use null for any other field you cannot support from the evidence.";

const EMPTY: &str = "(none)";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSection {
    pub title: String,
    pub body: String,
}

/// Five labeled sections in fixed order: instruction, patient evidence,
/// retrieved EHRs, KG triplets, output format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub sections: Vec<PromptSection>,
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl PromptBundle {
    /// System message carries the instruction; the user message carries the
    /// remaining sections under numbered headings.
    pub fn messages(&self) -> Vec<ChatMessage> {
        let mut user = String::new();
        for (i, s) in self.sections.iter().enumerate().skip(1) {
            if i > 1 {
                user.push('\n');
            }
            let _ = writeln!(user, "### {}. {}", i + 1, s.title);
            let _ = writeln!(user, "{}", s.body);
        }
        vec![ChatMessage::system(&self.sections[0].body), ChatMessage::user(user)]
    }

    pub fn key(&self) -> String {
        prompt_key(&self.messages())
    }

    pub fn section(&self, title: &str) -> Option<&str> {
        self.sections.iter().find(|s| s.title == title).map(|s| s.body.as_str())
    }
}

pub fn assemble_prompt<S: Scalar>(
    evidence: &[EvidenceItem],
    retrieved: &[(&EhrRecord<S>, S)],
    triplets: &[Triplet],
) -> PromptBundle {
    let mut items: Vec<&EvidenceItem> = evidence.iter().collect();
    items.sort_by_key(|e| e.timestamp);
    let mut ev = String::new();
    for (i, e) in items.iter().enumerate() {
        let _ = writeln!(ev, "[{}] ({}) {}", i + 1, e.kind.as_str(), one_line(&e.text));
    }

    let mut docs = String::new();
    for (rank, (r, score)) in retrieved.iter().enumerate() {
        let _ = writeln!(
            docs,
            "[{}] id={} score={:.6} diagnosis={}",
            rank + 1,
            r.id,
            score.as_f64(),
            r.diagnosis.as_deref().unwrap_or("unknown")
        );
        let _ = writeln!(docs, "    {}", one_line(&r.document_text()));
    }

    let mut sorted = triplets.to_vec();
    sorted.sort();
    let mut kg = String::new();
    for t in &sorted {
        let _ = writeln!(kg, "{t}");
    }

    let body = |s: String| {
        let s = s.trim_end().to_string();
        if s.is_empty() {
            EMPTY.to_string()
        } else {
            s
        }
    };
    let section = |title: &str, body: String| PromptSection {
        title: title.to_string(),
        body,
    };
    PromptBundle {
        sections: vec![
            section("Instruction", SYSTEM_INSTRUCTION.to_string()),
            section("Patient evidence", body(ev)),
            section("Retrieved EHRs", body(docs)),
            section("Knowledge graph triplets", body(kg)),
            section("Output format", OUTPUT_INSTRUCTION.to_string()),
        ],
    }
}

/// Test double answering with the diagnosis of the top retrieved EHR, read
/// back out of the prompt.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleLlm;

impl OracleLlm {
    pub fn top_diagnosis(messages: &[ChatMessage]) -> Option<String> {
        let user = messages.iter().rev().find(|m| m.role == "user")?;
        let docs = user.content.split("### 3. Retrieved EHRs\n").nth(1)?;
        let line = docs.lines().next()?;
        let rest = line.strip_prefix("[1] id=")?;
        rest.split_once(" diagnosis=").map(|(_, d)| d.trim().to_string())
    }
}

impl LlmClient for OracleLlm {
    fn name(&self) -> &str {
        "oracle-stub"
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let diagnosis = Self::top_diagnosis(messages).unwrap_or_else(|| "unknown".into());
        let body = serde_json::json!({
            "diagnosis": diagnosis,
            "treatment": null,
            "medication": null,
            "follow_up_question": null,
        });
        Ok(format!("```json\n{body}\n```"))
    }
}
