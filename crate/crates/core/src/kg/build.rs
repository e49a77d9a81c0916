use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::cluster::{average_linkage, cosine_distance_matrix};
use super::{DiagnosticKg, FeatureExtractor, KgError, Tier};
use crate::corpus::{Corpus, EhrRecord};
use crate::embedding::EmbeddingVector;
use crate::scalar::Scalar;

/// Default subcategory cut (cosine distance).
pub const DEFAULT_DELTA_SUB: f64 = 0.25;
/// Default category cut (cosine distance).
pub const DEFAULT_DELTA_CAT: f64 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HierarchyMode {
    /// Use record labels when every diagnosed record has them, else cluster.
    #[default]
    Auto,
    /// Take category/subcategory verbatim from the records.
    Labels,
    /// Derive the hierarchy by clustering disease centroids.
    Cluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KgConfig {
    pub delta_sub: f64,
    pub delta_cat: f64,
    pub mode: HierarchyMode,
}

impl KgConfig {
    /// Subcategories must be cut tighter than categories.
    pub fn validate(&self) -> Result<(), KgError> {
        let ordered = self.delta_sub > 0.0 && self.delta_sub < self.delta_cat;
        if !ordered {
            return Err(KgError::InvalidThresholds {
                sub: self.delta_sub,
                cat: self.delta_cat,
            });
        }
        Ok(())
    }
}

impl Default for KgConfig {
    fn default() -> Self {
        Self {
            delta_sub: DEFAULT_DELTA_SUB,
            delta_cat: DEFAULT_DELTA_CAT,
            mode: HierarchyMode::Auto,
        }
    }
}

struct DiseaseGroup<'a, S> {
    label: String,
    records: Vec<&'a EhrRecord<S>>,
    centroid: EmbeddingVector<S>,
}

fn synthetic_name(prefix: &str, index: usize, count: usize) -> String {
    let width = count.to_string().len().max(2);
    format!("{prefix}-{:0width$}", index + 1)
}

impl<S: Scalar> DiagnosticKg<S> {
    /// Builds the graph from the diagnosed records of an embedded corpus.
    pub fn build<X: FeatureExtractor + ?Sized>(
        corpus: &Corpus<S>,
        config: &KgConfig,
        extractor: &X,
    ) -> Result<Self, KgError> {
        config.validate()?;

        let mut by_disease: BTreeMap<String, Vec<&EhrRecord<S>>> = BTreeMap::new();
        for r in corpus.records() {
            if let Some(d) = r.diagnosis.as_deref().map(str::trim).filter(|d| !d.is_empty()) {
                by_disease.entry(d.to_string()).or_default().push(r);
            }
        }
        if by_disease.is_empty() {
            return Err(KgError::NoLabeledRecords);
        }

        let mut groups = Vec::with_capacity(by_disease.len());
        for (label, records) in by_disease {
            let mut vectors = Vec::with_capacity(records.len());
            for r in &records {
                vectors.push(r.embedding.as_ref().ok_or_else(|| KgError::NotEmbedded(r.id.clone()))?);
            }
            let centroid = EmbeddingVector::centroid(vectors)?;
            groups.push(DiseaseGroup {
                label,
                records,
                centroid,
            });
        }

        let fully_labeled = groups
            .iter()
            .flat_map(|g| &g.records)
            .all(|r| r.category.is_some() && r.subcategory.is_some());
        let use_labels = match config.mode {
            HierarchyMode::Labels => true,
            HierarchyMode::Cluster => false,
            HierarchyMode::Auto => fully_labeled,
        };
        let placement = if use_labels {
            placement_from_labels(&groups)?
        } else {
            placement_from_clusters(&groups, config)?
        };

        let mut kg = DiagnosticKg::new(corpus.encoder().cloned());
        let mut sub_members: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
        for (i, p) in placement.iter().enumerate() {
            sub_members.entry(p.clone()).or_default().push(i);
        }
        for ((cat, sub), members) in &sub_members {
            let centroid = EmbeddingVector::centroid(members.iter().map(|&i| &groups[i].centroid))?;
            let c = kg.add_node(Tier::Category, cat, None);
            let s = kg.add_node(Tier::Subcategory, sub, Some(centroid));
            kg.add_edge(&c, &s, None)?;
            for &i in members {
                let g = &groups[i];
                let d = kg.add_node(Tier::Disease, &g.label, Some(g.centroid.clone()));
                kg.add_edge(&s, &d, None)?;
                let texts: Vec<&str> = g.records.iter().map(|r| r.manifestation_text.as_str()).collect();
                for f in extractor.extract(&g.label, &texts)? {
                    let fid = kg.add_node(Tier::Feature, &f, None);
                    kg.add_edge(&d, &fid, Some(extractor.relation()))?;
                }
            }
        }
        kg.validate()?;
        Ok(kg)
    }
}

fn placement_from_labels<S: Scalar>(groups: &[DiseaseGroup<'_, S>]) -> Result<Vec<(String, String)>, KgError> {
    let mut sub_parent: BTreeMap<String, String> = BTreeMap::new();
    let mut out = Vec::with_capacity(groups.len());
    for g in groups {
        let mut placed: Option<(String, String)> = None;
        for r in &g.records {
            let (Some(cat), Some(sub)) = (&r.category, &r.subcategory) else {
                return Err(KgError::MissingHierarchyLabels(r.id.clone()));
            };
            let here = (cat.trim().to_string(), sub.trim().to_string());
            match &placed {
                None => placed = Some(here),
                Some(p) if *p != here => {
                    return Err(KgError::InconsistentHierarchy(format!(
                        "disease `{}` is filed under both {}/{} and {}/{}",
                        g.label, p.0, p.1, here.0, here.1
                    )))
                }
                _ => {}
            }
        }
        let (cat, sub) = placed.expect("every group has a record");
        if let Some(prev) = sub_parent.insert(sub.clone(), cat.clone()) {
            if prev != cat {
                return Err(KgError::InconsistentHierarchy(format!(
                    "subcategory `{sub}` appears under categories `{prev}` and `{cat}`"
                )));
            }
        }
        out.push((cat, sub));
    }
    Ok(out)
}

fn placement_from_clusters<S: Scalar>(
    groups: &[DiseaseGroup<'_, S>],
    config: &KgConfig,
) -> Result<Vec<(String, String)>, KgError> {
    let points: Vec<_> = groups.iter().map(|g| &g.centroid).collect();
    let dendrogram = average_linkage(&cosine_distance_matrix(&points)?);
    // groups are in label order, so first-appearance numbering follows the
    // smallest member label of each cluster
    let subs = dendrogram.cut(S::lit(config.delta_sub));
    let cats = dendrogram.cut(S::lit(config.delta_cat));
    let n_sub = subs.iter().max().map_or(0, |m| m + 1);
    let n_cat = cats.iter().max().map_or(0, |m| m + 1);
    Ok(subs
        .iter()
        .zip(&cats)
        .map(|(&s, &c)| {
            (
                synthetic_name("category", c, n_cat),
                synthetic_name("subcategory", s, n_sub),
            )
        })
        .collect())
}
