//! EHR records, JSONL ingestion and similar-case retrieval.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{EmbeddingError, EmbeddingVector, Encoder, EncoderDescriptor};
use crate::index::{IndexError, VectorIndex};
use crate::scalar::Scalar;

/// Number of similar records handed to the backbone LLM.
pub const DEFAULT_RETRIEVAL_K: usize = 3;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("FileNotFound: {0}")]
    FileNotFound(String),
    #[error("IoError: {0}")]
    Io(#[from] io::Error),
    #[error("MalformedRecord at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("DuplicateId: `{id}` (line {line})")]
    DuplicateId { id: String, line: usize },
    #[error("record `{0}` has no embedding; embed the corpus first")]
    NotEmbedded(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// One electronic health record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct EhrRecord<S = f64> {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnosis: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subcategory: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub demographics: BTreeMap<String, String>,
    pub manifestation_text: String,
    #[serde(skip)]
    pub embedding: Option<EmbeddingVector<S>>,
}

impl<S: Scalar> EhrRecord<S> {
    pub fn new(id: impl Into<String>, manifestation_text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            diagnosis: None,
            category: None,
            subcategory: None,
            demographics: BTreeMap::new(),
            manifestation_text: manifestation_text.into(),
            embedding: None,
        }
    }

    pub fn with_diagnosis(mut self, diagnosis: impl Into<String>) -> Self {
        self.diagnosis = Some(diagnosis.into());
        self
    }

    pub fn with_hierarchy(mut self, category: impl Into<String>, subcategory: impl Into<String>) -> Self {
        self.category = Some(category.into());
        self.subcategory = Some(subcategory.into());
        self
    }

    pub fn with_demographic(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.demographics.insert(key.into(), value.into());
        self
    }

    /// Checks the per-record invariants.
    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("id must be non-empty".into());
        }
        if self.manifestation_text.trim().is_empty() {
            return Err("manifestation_text must be non-empty".into());
        }
        if self.subcategory.is_some() && self.category.is_none() {
            return Err("subcategory requires category".into());
        }
        Ok(())
    }

    /// The text that is embedded for retrieval: demographics as `key: value`
    /// lines in key order, then the manifestation text.
    pub fn document_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.demographics {
            out.push_str(&k.replace('_', " "));
            out.push_str(": ");
            out.push_str(v);
            out.push('\n');
        }
        out.push_str(&self.manifestation_text);
        out
    }

    /// Parses one JSON object in the corpus line format.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let obj = value.as_object().ok_or("record must be a JSON object")?;
        match obj.get("manifestation_text") {
            None | Some(serde_json::Value::Null) => return Err("manifestation_text required".into()),
            _ => {}
        }
        if !obj.contains_key("id") {
            return Err("id required".into());
        }
        let rec: Self = serde_json::from_value(value).map_err(|e| e.to_string())?;
        rec.validate()?;
        Ok(rec)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

/// Ordered collection of records; file order is preserved everywhere.
#[derive(Debug, Clone)]
pub struct Corpus<S = f64> {
    records: Vec<EhrRecord<S>>,
    encoder: Option<EncoderDescriptor>,
}

impl<S: Scalar> Default for Corpus<S> {
    fn default() -> Self {
        Self {
            records: Vec::new(),
            encoder: None,
        }
    }
}

impl<S: Scalar> Corpus<S> {
    pub fn from_records(records: Vec<EhrRecord<S>>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            r.validate().map_err(|reason| CorpusError::MalformedRecord { line: i + 1, reason })?;
            if !seen.insert(r.id.clone()) {
                return Err(CorpusError::DuplicateId {
                    id: r.id.clone(),
                    line: i + 1,
                });
            }
        }
        Ok(Self {
            records,
            encoder: None,
        })
    }

    /// Parses JSONL text. Blank lines are skipped; line numbers are 1-based.
    pub fn parse_jsonl(text: &str) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let rec = EhrRecord::from_json(line)
                .map_err(|reason| CorpusError::MalformedRecord { line: line_no, reason })?;
            if !seen.insert(rec.id.clone()) {
                return Err(CorpusError::DuplicateId {
                    id: rec.id,
                    line: line_no,
                });
            }
            records.push(rec);
        }
        Ok(Self {
            records,
            encoder: None,
        })
    }

    pub fn ingest(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => CorpusError::FileNotFound(path.display().to_string()),
            _ => CorpusError::Io(e),
        })?;
        Self::parse_jsonl(&text)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.to_json_line());
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    pub fn records(&self) -> &[EhrRecord<S>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&EhrRecord<S>> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn encoder(&self) -> Option<&EncoderDescriptor> {
        self.encoder.as_ref()
    }

    /// Fills every record's embedding using `encoder`.
    pub fn embed<E: Encoder<S> + ?Sized>(mut self, encoder: &E) -> Result<Self, CorpusError> {
        let docs: Vec<String> = self.records.iter().map(EhrRecord::document_text).collect();
        let refs: Vec<&str> = docs.iter().map(String::as_str).collect();
        let vectors = encoder.encode_batch(&refs)?;
        for (r, v) in self.records.iter_mut().zip(vectors) {
            r.embedding = Some(v);
        }
        self.encoder = Some(encoder.descriptor().clone());
        Ok(self)
    }

    pub fn build_index(&self) -> Result<VectorIndex<S>, CorpusError> {
        let descriptor = match &self.encoder {
            Some(d) => d.clone(),
            None if self.records.is_empty() => {
                return Err(CorpusError::NotEmbedded("<empty corpus>".into()))
            }
            None => return Err(CorpusError::NotEmbedded(self.records[0].id.clone())),
        };
        let mut pairs = Vec::with_capacity(self.records.len());
        for r in &self.records {
            let v = r
                .embedding
                .clone()
                .ok_or_else(|| CorpusError::NotEmbedded(r.id.clone()))?;
            pairs.push((r.id.clone(), v));
        }
        Ok(VectorIndex::build(descriptor, pairs)?)
    }

    /// The `k` records most similar to `patient_text`, best first.
    pub fn retrieve_similar<E: Encoder<S> + ?Sized>(
        &self,
        index: &VectorIndex<S>,
        encoder: &E,
        patient_text: &str,
        k: usize,
    ) -> Result<Vec<(&EhrRecord<S>, S)>, CorpusError> {
        index.check_encoder(encoder.descriptor())?;
        let query = encoder.encode(patient_text)?;
        let hits = index.top_k(&query, k)?;
        hits.into_iter()
            .map(|h| {
                self.get(&h.record_id)
                    .map(|r| (r, h.score))
                    .ok_or(CorpusError::NotEmbedded(h.record_id))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{cosine_similarity, HashingEncoder};

    const THREE: &str = r#"{"id":"e1","diagnosis":"Sciatica","manifestation_text":"pain down the leg"}
{"id":"e2","manifestation_text":"numbness in toes","demographics":{"age":"61"}}
{"id":"e3","diagnosis":"Gout","category":"Joint","subcategory":"Crystal arthropathy","manifestation_text":"hot swollen big toe"}
"#;

    #[test]
    fn parses_records_in_file_order() {
        let c = Corpus::<f64>::parse_jsonl(THREE).unwrap();
        let ids: Vec<_> = c.records().iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["e1", "e2", "e3"]);
        assert_eq!(c.records()[1].demographics["age"], "61");
    }

    #[test]
    fn missing_manifestation_reports_line() {
        let text = "{\"id\":\"a\",\"manifestation_text\":\"x y\"}\n{\"id\":\"b\"}\n";
        match Corpus::<f64>::parse_jsonl(text) {
            Err(CorpusError::MalformedRecord { line, reason }) => {
                assert_eq!(line, 2);
                assert_eq!(reason, "manifestation_text required");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = "{\"id\":\"e1\",\"manifestation_text\":\"a b\"}\n{\"id\":\"e1\",\"manifestation_text\":\"c d\"}\n";
        assert!(matches!(
            Corpus::<f64>::parse_jsonl(text),
            Err(CorpusError::DuplicateId { ref id, line: 2 }) if id == "e1"
        ));
    }

    #[test]
    fn subcategory_without_category_is_malformed() {
        let text = r#"{"id":"a","subcategory":"s","manifestation_text":"x"}"#;
        assert!(matches!(
            Corpus::<f64>::parse_jsonl(text),
            Err(CorpusError::MalformedRecord { line: 1, .. })
        ));
        let text = r#"{"id":"a","manifestation_text":"   "}"#;
        assert!(Corpus::<f64>::parse_jsonl(text).is_err());
        assert!(Corpus::<f64>::parse_jsonl("{not json").is_err());
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            Corpus::<f64>::ingest("/nonexistent/corpus.jsonl"),
            Err(CorpusError::FileNotFound(_))
        ));
    }

    #[test]
    fn serialize_round_trip() {
        let c = Corpus::<f64>::parse_jsonl(THREE).unwrap();
        let again = Corpus::<f64>::parse_jsonl(&c.to_jsonl()).unwrap();
        assert_eq!(c.records(), again.records());
    }

    #[test]
    fn embedding_is_idempotent_and_shaped() {
        let enc = HashingEncoder::<f64>::default();
        let c = Corpus::parse_jsonl(THREE).unwrap();
        let a = c.clone().embed(&enc).unwrap();
        let b = c.embed(&enc).unwrap();
        assert_eq!(a.records(), b.records());
        for r in a.records() {
            assert_eq!(r.embedding.as_ref().unwrap().dim(), 256);
        }
        let empty = Corpus::<f64>::default().embed(&enc).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn retrieval_returns_records_with_scores() {
        let enc = HashingEncoder::<f64>::default();
        let c = Corpus::parse_jsonl(THREE).unwrap().embed(&enc).unwrap();
        let idx = c.build_index().unwrap();
        let hits = c.retrieve_similar(&idx, &enc, "hot swollen big toe", 3).unwrap();
        assert_eq!(hits.len(), 3);
        assert_eq!(hits[0].0.id, "e3");
        let q = enc.encode("hot swollen big toe").unwrap();
        for (r, s) in &hits {
            let expect = cosine_similarity(&q, r.embedding.as_ref().unwrap()).unwrap();
            assert!((expect - s).abs() < 1e-9);
        }
        let wrong = HashingEncoder::<f64>::new(64);
        assert!(c.retrieve_similar(&idx, &wrong, "toe", 1).is_err());
    }

    #[test]
    fn unembedded_corpus_cannot_be_indexed() {
        let c = Corpus::<f64>::parse_jsonl(THREE).unwrap();
        assert!(matches!(c.build_index(), Err(CorpusError::NotEmbedded(_))));
    }
}
