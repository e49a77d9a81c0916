//! Four-tier diagnostic knowledge graph.
//!
//! Tiers, top to bottom: category, subcategory, disease, feature. Everything
//! above the disease tier is a tree; features hang off any number of diseases.
//! Node ids are `"{tier}:{label}"`, so sorting ids within a tier sorts labels.

mod augment;
mod build;
pub mod cluster;
mod features;
mod io;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{cosine_similarity, EmbeddingError, EmbeddingVector, Encoder, EncoderDescriptor};
use crate::scalar::Scalar;

pub use augment::{Augmenter, FeatureProposal, LlmAugmenter, NoopAugmenter, SubcategoryView};
pub use build::{HierarchyMode, KgConfig, DEFAULT_DELTA_CAT, DEFAULT_DELTA_SUB};
pub use features::{normalize_feature, FeatureExtractor, LlmFeatureExtractor, RuleBasedExtractor};
pub use io::SCHEMA_VERSION;

/// Relation used for feature–disease edges unless an extractor names another.
pub const DEFAULT_RELATION: &str = "has_feature";

#[derive(Debug, Error)]
pub enum KgError {
    #[error("NoLabeledRecords: no record carries a diagnosis")]
    NoLabeledRecords,
    #[error("InvalidThresholds: delta_sub ({sub}) must be below delta_cat ({cat})")]
    InvalidThresholds { sub: f64, cat: f64 },
    #[error("MissingHierarchyLabels: record `{0}` lacks category/subcategory")]
    MissingHierarchyLabels(String),
    #[error("InconsistentHierarchy: {0}")]
    InconsistentHierarchy(String),
    #[error("record `{0}` has no embedding")]
    NotEmbedded(String),
    #[error("EmptyKg: graph has no subcategories")]
    EmptyKg,
    #[error("UnknownNode: `{0}`")]
    UnknownNode(String),
    #[error("InvariantViolation: {0}")]
    InvariantViolation(String),
    #[error("ExtractorUnavailable: {0}")]
    ExtractorUnavailable(String),
    #[error("AugmenterUnavailable: {0}")]
    AugmenterUnavailable(String),
    #[error("IoError: {message}")]
    Io {
        message: String,
        line: Option<usize>,
        column: Option<usize>,
    },
    #[error("SchemaVersionMismatch: expected {expected}, found {found}")]
    SchemaVersionMismatch { expected: u64, found: String },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Category,
    Subcategory,
    Disease,
    Feature,
}

impl Tier {
    pub const ALL: [Tier; 4] = [Tier::Category, Tier::Subcategory, Tier::Disease, Tier::Feature];

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Category => "category",
            Tier::Subcategory => "subcategory",
            Tier::Disease => "disease",
            Tier::Feature => "feature",
        }
    }

    fn depth(self) -> u8 {
        self as u8
    }

    /// Only neighbouring tiers may share an edge.
    pub fn adjacent(self, other: Tier) -> bool {
        self.depth().abs_diff(other.depth()) == 1
    }

    pub fn node_id(self, label: &str) -> String {
        format!("{}:{}", self.as_str(), label)
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Label part of a node id (`"disease:Gout"` -> `"Gout"`).
pub fn label_of(id: &str) -> &str {
    id.split_once(':').map_or(id, |(_, l)| l)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct KgNode<S = f64> {
    pub id: String,
    pub tier: Tier,
    pub label: String,
    pub centroid: Option<EmbeddingVector<S>>,
}

/// A ⟨disease, relation, feature⟩ statement.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub disease: String,
    pub relation: String,
    pub feature: String,
}

impl fmt::Display for Triplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", label_of(&self.disease), self.relation, label_of(&self.feature))
    }
}

type Edge = (String, String);

fn edge_key(a: &str, b: &str) -> Edge {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticKg<S = f64> {
    encoder: Option<EncoderDescriptor>,
    nodes: BTreeMap<String, KgNode<S>>,
    edges: BTreeSet<Edge>,
    relations: BTreeMap<Edge, String>,
    adjacency: BTreeMap<String, BTreeSet<String>>,
}

impl<S: Scalar> Default for DiagnosticKg<S> {
    fn default() -> Self {
        Self {
            encoder: None,
            nodes: BTreeMap::new(),
            edges: BTreeSet::new(),
            relations: BTreeMap::new(),
            adjacency: BTreeMap::new(),
        }
    }
}

impl<S: Scalar> DiagnosticKg<S> {
    pub fn new(encoder: Option<EncoderDescriptor>) -> Self {
        Self {
            encoder,
            ..Self::default()
        }
    }

    pub fn encoder(&self) -> Option<&EncoderDescriptor> {
        self.encoder.as_ref()
    }

    /// Inserts a node, returning its id. An existing node with the same id is
    /// kept and its centroid replaced only if `centroid` is `Some`.
    pub fn add_node(&mut self, tier: Tier, label: &str, centroid: Option<EmbeddingVector<S>>) -> String {
        let id = tier.node_id(label);
        let node = self.nodes.entry(id.clone()).or_insert_with(|| KgNode {
            id: id.clone(),
            tier,
            label: label.to_string(),
            centroid: None,
        });
        if centroid.is_some() {
            node.centroid = centroid;
        }
        id
    }

    /// Adds an undirected edge between adjacent tiers. Feature–disease edges
    /// carry `relation` (defaulting to `has_feature`).
    pub fn add_edge(&mut self, a: &str, b: &str, relation: Option<&str>) -> Result<bool, KgError> {
        let ta = self.tier_of(a)?;
        let tb = self.tier_of(b)?;
        if !ta.adjacent(tb) {
            return Err(KgError::InvariantViolation(format!(
                "edge {a} -- {b} joins non-adjacent tiers"
            )));
        }
        let key = edge_key(a, b);
        let inserted = self.edges.insert(key.clone());
        if matches!((ta, tb), (Tier::Disease, Tier::Feature) | (Tier::Feature, Tier::Disease)) {
            self.relations
                .entry(key)
                .or_insert_with(|| relation.unwrap_or(DEFAULT_RELATION).to_string());
        }
        self.adjacency.entry(a.to_string()).or_default().insert(b.to_string());
        self.adjacency.entry(b.to_string()).or_default().insert(a.to_string());
        Ok(inserted)
    }

    fn tier_of(&self, id: &str) -> Result<Tier, KgError> {
        self.nodes
            .get(id)
            .map(|n| n.tier)
            .ok_or_else(|| KgError::UnknownNode(id.to_string()))
    }

    pub fn node(&self, id: &str) -> Option<&KgNode<S>> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &KgNode<S>> {
        self.nodes.values()
    }

    /// Node ids of `tier`, ascending.
    pub fn ids_in(&self, tier: Tier) -> Vec<&str> {
        self.nodes
            .values()
            .filter(|n| n.tier == tier)
            .map(|n| n.id.as_str())
            .collect()
    }

    pub fn tier_counts(&self) -> [usize; 4] {
        let mut counts = [0; 4];
        for n in self.nodes.values() {
            counts[n.tier as usize] += 1;
        }
        counts
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: &str, b: &str) -> bool {
        self.edges.contains(&edge_key(a, b))
    }

    pub fn relation(&self, a: &str, b: &str) -> Option<&str> {
        self.relations.get(&edge_key(a, b)).map(String::as_str)
    }

    /// Neighbours of `id` in `tier`, ascending.
    pub fn neighbors_in(&self, id: &str, tier: Tier) -> Vec<&str> {
        self.adjacency
            .get(id)
            .into_iter()
            .flatten()
            .filter(|n| self.nodes.get(n.as_str()).is_some_and(|x| x.tier == tier))
            .map(String::as_str)
            .collect()
    }

    pub fn parent(&self, id: &str) -> Option<&str> {
        let tier = self.nodes.get(id)?.tier;
        let up = match tier {
            Tier::Category | Tier::Feature => return None,
            Tier::Subcategory => Tier::Category,
            Tier::Disease => Tier::Subcategory,
        };
        self.neighbors_in(id, up).into_iter().next()
    }

    /// Diseases under a subcategory.
    pub fn diseases_under(&self, subcategory: &str) -> Result<Vec<&str>, KgError> {
        self.expect_tier(subcategory, Tier::Subcategory)?;
        Ok(self.neighbors_in(subcategory, Tier::Disease))
    }

    pub fn features_of(&self, disease: &str) -> Vec<&str> {
        self.neighbors_in(disease, Tier::Feature)
    }

    /// Finds a node of `tier` whose label matches `label` ignoring case and
    /// surrounding whitespace.
    pub fn find_by_label(&self, tier: Tier, label: &str) -> Option<&KgNode<S>> {
        let want = label.trim().to_lowercase();
        self.nodes
            .values()
            .find(|n| n.tier == tier && n.label.trim().to_lowercase() == want)
    }

    fn expect_tier(&self, id: &str, tier: Tier) -> Result<(), KgError> {
        match self.nodes.get(id) {
            Some(n) if n.tier == tier => Ok(()),
            _ => Err(KgError::UnknownNode(id.to_string())),
        }
    }

    /// Subcategory whose centroid is most similar to the encoded patient text.
    /// Ties go to the lowest node id.
    pub fn match_subcategory<E: Encoder<S> + ?Sized>(
        &self,
        encoder: &E,
        patient_text: &str,
    ) -> Result<String, KgError> {
        if let Some(own) = &self.encoder {
            if own != encoder.descriptor() {
                return Err(EmbeddingError::EncoderMismatch {
                    expected: own.name.clone(),
                    actual: encoder.descriptor().name.clone(),
                }
                .into());
            }
        }
        let query = encoder.encode(patient_text)?;
        self.match_subcategory_vector(&query)
    }

    pub fn match_subcategory_vector(&self, query: &EmbeddingVector<S>) -> Result<String, KgError> {
        let mut best: Option<(S, &str)> = None;
        for id in self.ids_in(Tier::Subcategory) {
            let centroid = self.nodes[id]
                .centroid
                .as_ref()
                .ok_or_else(|| KgError::InvariantViolation(format!("{id} has no centroid")))?;
            let score = cosine_similarity(query, centroid)?;
            // ids ascend, so only a strictly better score replaces the incumbent
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, id));
            }
        }
        best.map(|(_, id)| id.to_string()).ok_or(KgError::EmptyKg)
    }

    /// All feature–disease edges under `subcategory`, sorted by
    /// (disease id, feature id).
    pub fn gather_triplets(&self, subcategory: &str) -> Result<Vec<Triplet>, KgError> {
        let mut out = Vec::new();
        for d in self.diseases_under(subcategory)? {
            for f in self.features_of(d) {
                out.push(Triplet {
                    disease: d.to_string(),
                    relation: self.relation(d, f).unwrap_or(DEFAULT_RELATION).to_string(),
                    feature: f.to_string(),
                });
            }
        }
        out.sort();
        Ok(out)
    }

    /// Checks every structural invariant of the graph.
    pub fn validate(&self) -> Result<(), KgError> {
        let bad = |m: String| Err(KgError::InvariantViolation(m));
        for (id, n) in &self.nodes {
            if *id != n.tier.node_id(&n.label) {
                return bad(format!("node id `{id}` does not match its tier and label"));
            }
            let needs_centroid = matches!(n.tier, Tier::Subcategory | Tier::Disease);
            match (&n.centroid, needs_centroid) {
                (None, true) => return bad(format!("{id} has no centroid")),
                (Some(c), _) => {
                    if let Some(enc) = &self.encoder {
                        if c.dim() != enc.dimension {
                            return bad(format!("{id} centroid has dimension {}", c.dim()));
                        }
                    }
                }
                _ => {}
            }
        }
        for (a, b) in &self.edges {
            let (ta, tb) = match (self.nodes.get(a), self.nodes.get(b)) {
                (Some(x), Some(y)) => (x.tier, y.tier),
                _ => return bad(format!("edge {a} -- {b} references a missing node")),
            };
            if !ta.adjacent(tb) {
                return bad(format!("edge {a} -- {b} joins non-adjacent tiers"));
            }
            if !self.adjacency.get(a).is_some_and(|s| s.contains(b))
                || !self.adjacency.get(b).is_some_and(|s| s.contains(a))
            {
                return bad(format!("edge {a} -- {b} is not symmetric"));
            }
        }
        for (a, b) in self.relations.keys() {
            if !self.edges.contains(&(a.clone(), b.clone())) {
                return bad(format!("relation on missing edge {a} -- {b}"));
            }
        }
        for n in self.nodes.values() {
            let up = |t| self.neighbors_in(&n.id, t).len();
            match n.tier {
                Tier::Disease if up(Tier::Subcategory) != 1 => {
                    return bad(format!("{} must have exactly one subcategory", n.id))
                }
                Tier::Subcategory if up(Tier::Category) != 1 => {
                    return bad(format!("{} must have exactly one category", n.id))
                }
                Tier::Feature if up(Tier::Disease) == 0 => {
                    return bad(format!("{} is an orphan feature", n.id))
                }
                _ => {}
            }
        }
        let counts = self.tier_counts();
        if counts[Tier::Disease as usize] > 0 && counts.iter().take(3).any(|c| *c == 0) {
            return bad("graph with diseases must populate category, subcategory and disease tiers".into());
        }
        Ok(())
    }
}
