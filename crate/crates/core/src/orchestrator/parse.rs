use serde::Deserialize;

/// Fields requested from the backbone LLM.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LlmAnswer {
    pub diagnosis: String,
    pub treatment: Option<String>,
    pub medication: Option<String>,
    pub follow_up_question: Option<String>,
}

#[derive(Deserialize)]
struct Wire {
    diagnosis: Option<String>,
    treatment: Option<String>,
    medication: Option<String>,
    follow_up_question: Option<String>,
}

fn fenced(raw: &str) -> Option<&str> {
    let start = raw.find("```")?;
    let after = &raw[start + 3..];
    let body_start = after.find('\n').map_or(0, |i| i + 1);
    let body = &after[body_start..];
    let end = body.find("```")?;
    Some(&body[..end])
}

fn braces(raw: &str) -> Option<&str> {
    let start = raw.find('{')?;
    let end = raw.rfind('}')?;
    (end > start).then(|| &raw[start..=end])
}

fn clean(v: Option<String>) -> Option<String> {
    v.map(|s| s.trim().to_string()).filter(|s| !s.is_empty())
}

/// Extracts the JSON answer from an LLM reply. A fenced block is preferred;
/// otherwise the outermost braces are tried. Surrounding prose is ignored.
pub fn parse_answer(raw: &str) -> Result<LlmAnswer, String> {
    let candidates = [fenced(raw), braces(raw)];
    let mut last = "no JSON object found".to_string();
    for c in candidates.into_iter().flatten() {
        match serde_json::from_str::<Wire>(c.trim()) {
            Ok(w) => {
                let Some(diagnosis) = clean(w.diagnosis) else {
                    last = "diagnosis missing".into();
                    continue;
                };
                return Ok(LlmAnswer {
                    diagnosis,
                    treatment: clean(w.treatment),
                    medication: clean(w.medication),
                    follow_up_question: clean(w.follow_up_question),
                });
            }
            Err(e) => last = e.to_string(),
        }
    }
    Err(last)
}
