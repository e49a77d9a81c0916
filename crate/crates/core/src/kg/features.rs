use super::{KgError, DEFAULT_RELATION};
use crate::llm::{ChatMessage, LlmClient};

/// Lowercases and trims a feature label.
pub fn normalize_feature(label: &str) -> String {
    label.trim().to_lowercase()
}

fn push_unique(out: &mut Vec<String>, label: String) {
    if !out.contains(&label) {
        out.push(label);
    }
}

/// Decomposes a disease's manifestation texts into atomic feature labels.
pub trait FeatureExtractor {
    /// Deduplicated, normalized labels in order of first appearance.
    fn extract(&self, disease: &str, manifestations: &[&str]) -> Result<Vec<String>, KgError>;

    /// Relation attached to the feature–disease edges this extractor yields.
    fn relation(&self) -> &str {
        DEFAULT_RELATION
    }
}

/// Splits on `;`, `,`, `.` and newlines, keeping pieces of 3+ characters.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBasedExtractor;

impl FeatureExtractor for RuleBasedExtractor {
    fn extract(&self, _disease: &str, manifestations: &[&str]) -> Result<Vec<String>, KgError> {
        let mut out = Vec::new();
        for text in manifestations {
            for piece in text.split([';', ',', '.', '\n']) {
                let label = normalize_feature(piece);
                if label.chars().count() >= 3 {
                    push_unique(&mut out, label);
                }
            }
        }
        Ok(out)
    }
}

/// Asks the backbone LLM for one feature per line.
pub struct LlmFeatureExtractor<L> {
    llm: L,
}

impl<L: LlmClient> LlmFeatureExtractor<L> {
    pub fn new(llm: L) -> Self {
        Self { llm }
    }

    fn prompt(disease: &str, manifestations: &[&str]) -> Vec<ChatMessage> {
        let mut user = format!(
            "Disease: {disease}\nList the distinct clinical features (symptoms, signs, findings) \
             present in the following case descriptions, one short phrase per line, no numbering.\n"
        );
        for (i, m) in manifestations.iter().enumerate() {
            user.push_str(&format!("\nCase {}: {}", i + 1, m.trim()));
        }
        vec![
            ChatMessage::system("You extract clinical features from case notes."),
            ChatMessage::user(user),
        ]
    }
}

impl<L: LlmClient> FeatureExtractor for LlmFeatureExtractor<L> {
    fn extract(&self, disease: &str, manifestations: &[&str]) -> Result<Vec<String>, KgError> {
        let reply = self
            .llm
            .complete(&Self::prompt(disease, manifestations))
            .map_err(|e| KgError::ExtractorUnavailable(e.to_string()))?;
        let mut out = Vec::new();
        for line in reply.lines() {
            let line = line.trim().trim_start_matches(['-', '*', '•']);
            let label = normalize_feature(line);
            if label.chars().count() >= 3 {
                push_unique(&mut out, label);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{StaticLlm, UnavailableLlm};

    #[test]
    fn splits_on_delimiters() {
        let got = RuleBasedExtractor
            .extract("d", &["leg pain; numbness when walking"])
            .unwrap();
        assert_eq!(got, ["leg pain", "numbness when walking"]);
    }

    #[test]
    fn deduplicates_and_normalizes() {
        let got = RuleBasedExtractor.extract("d", &["fever", "fever"]).unwrap();
        assert_eq!(got, ["fever"]);
        let got = RuleBasedExtractor.extract("d", &["  Fever , ab. FEVER\nchills"]).unwrap();
        assert_eq!(got, ["fever", "chills"]);
    }

    #[test]
    fn union_over_records() {
        let texts = ["back pain; leg numbness", "leg numbness, stiffness", "fatigue. back pain"];
        let got = RuleBasedExtractor.extract("d", &texts).unwrap();
        // set-union oracle
        let mut expect = std::collections::BTreeSet::new();
        for t in texts {
            for f in RuleBasedExtractor.extract("d", &[t]).unwrap() {
                expect.insert(f);
            }
        }
        let got_set: std::collections::BTreeSet<_> = got.iter().cloned().collect();
        assert_eq!(got_set, expect);
        assert_eq!(got.len(), expect.len());
    }

    #[test]
    fn llm_extractor_parses_lines() {
        let ex = LlmFeatureExtractor::new(StaticLlm("- Leg pain\n* leg pain\nab\nNeurogenic claudication\n".into()));
        assert_eq!(ex.extract("d", &["x"]).unwrap(), ["leg pain", "neurogenic claudication"]);
        let down = LlmFeatureExtractor::new(UnavailableLlm);
        assert!(matches!(down.extract("d", &["x"]), Err(KgError::ExtractorUnavailable(_))));
    }
}
