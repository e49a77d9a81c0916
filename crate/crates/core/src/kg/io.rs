use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{edge_key, DiagnosticKg, KgError, Tier};
use crate::embedding::{EmbeddingVector, EncoderDescriptor};
use crate::scalar::Scalar;

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
struct NodeRecord<S> {
    id: String,
    tier: Tier,
    label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    centroid: Option<Vec<S>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
struct KgFile<S> {
    schema_version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    encoder: Option<EncoderDescriptor>,
    nodes: Vec<NodeRecord<S>>,
    edges: Vec<[String; 2]>,
    relations: BTreeMap<String, String>,
}

fn relation_key(a: &str, b: &str) -> String {
    format!("{a}|{b}")
}

fn io_err(e: impl std::fmt::Display) -> KgError {
    KgError::Io {
        message: e.to_string(),
        line: None,
        column: None,
    }
}

fn json_err(e: serde_json::Error) -> KgError {
    KgError::Io {
        message: e.to_string(),
        line: Some(e.line()),
        column: Some(e.column()),
    }
}

impl<S: Scalar> DiagnosticKg<S> {
    /// Canonical JSON encoding; identical graphs give identical bytes.
    pub fn to_json(&self) -> String {
        let file = KgFile {
            schema_version: SCHEMA_VERSION,
            encoder: self.encoder.clone(),
            nodes: self
                .nodes
                .values()
                .map(|n| NodeRecord {
                    id: n.id.clone(),
                    tier: n.tier,
                    label: n.label.clone(),
                    centroid: n.centroid.as_ref().map(|c| c.values().to_vec()),
                })
                .collect(),
            edges: self.edges.iter().map(|(a, b)| [a.clone(), b.clone()]).collect(),
            relations: self
                .relations
                .iter()
                .map(|((a, b), r)| (relation_key(a, b), r.clone()))
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("graph serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, KgError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(json_err)?;
        match value.get("schema_version").and_then(serde_json::Value::as_u64) {
            Some(SCHEMA_VERSION) => {}
            _ => {
                return Err(KgError::SchemaVersionMismatch {
                    expected: SCHEMA_VERSION,
                    found: value
                        .get("schema_version")
                        .map_or_else(|| "none".to_string(), ToString::to_string),
                })
            }
        }
        let file: KgFile<S> = serde_json::from_value(value).map_err(json_err)?;
        let mut kg = DiagnosticKg::new(file.encoder);
        for n in file.nodes {
            let id = kg.add_node(n.tier, &n.label, n.centroid.map(EmbeddingVector::assume_normalized));
            if id != n.id {
                return Err(KgError::InvariantViolation(format!(
                    "node id `{}` does not match tier {} and label `{}`",
                    n.id, n.tier, n.label
                )));
            }
        }
        let mut relations = file.relations;
        for [a, b] in &file.edges {
            let (ka, kb) = edge_key(a, b);
            let rel = relations.remove(&relation_key(&ka, &kb));
            kg.add_edge(a, b, rel.as_deref())?;
        }
        if let Some(key) = relations.keys().next() {
            return Err(KgError::InvariantViolation(format!("relation `{key}` has no edge")));
        }
        kg.validate()?;
        Ok(kg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), KgError> {
        fs::write(path, self.to_json()).map_err(io_err)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KgError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| io_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
