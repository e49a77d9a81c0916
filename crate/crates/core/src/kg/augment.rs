use super::{label_of, normalize_feature, DiagnosticKg, KgError, Tier};
use crate::llm::{ChatMessage, LlmClient};
use crate::scalar::Scalar;

/// What an augmenter sees of one subcategory: its diseases and their current
/// feature labels, all in id order.
#[derive(Debug, Clone, PartialEq)]
pub struct SubcategoryView {
    pub subcategory: String,
    pub diseases: Vec<(String, Vec<String>)>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct FeatureProposal {
    pub disease: String,
    pub feature: String,
}

impl FeatureProposal {
    pub fn new(disease: impl Into<String>, feature: impl Into<String>) -> Self {
        Self {
            disease: disease.into(),
            feature: feature.into(),
        }
    }
}

/// Proposes extra features that help tell sibling diseases apart.
pub trait Augmenter {
    fn propose(&self, view: &SubcategoryView) -> Result<Vec<FeatureProposal>, KgError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoopAugmenter;

impl Augmenter for NoopAugmenter {
    fn propose(&self, _view: &SubcategoryView) -> Result<Vec<FeatureProposal>, KgError> {
        Ok(Vec::new())
    }
}

/// Augmenter backed by the backbone LLM. Expects `disease | feature` lines.
pub struct LlmAugmenter<L> {
    llm: L,
}

impl<L: LlmClient> LlmAugmenter<L> {
    pub fn new(llm: L) -> Self {
        Self { llm }
    }
}

impl<L: LlmClient> Augmenter for LlmAugmenter<L> {
    fn propose(&self, view: &SubcategoryView) -> Result<Vec<FeatureProposal>, KgError> {
        let mut user = format!(
            "The following diseases share the subcategory `{}` and are easily confused.\n\
             For each disease, add clinical features that distinguish it from its siblings.\n\
             Answer with one `disease | feature` pair per line.\n",
            view.subcategory
        );
        for (d, fs) in &view.diseases {
            user.push_str(&format!("\n{d}: {}", fs.join("; ")));
        }
        let reply = self
            .llm
            .complete(&[
                ChatMessage::system("You are a clinician differentiating similar diseases."),
                ChatMessage::user(user),
            ])
            .map_err(|e| KgError::AugmenterUnavailable(e.to_string()))?;
        Ok(reply
            .lines()
            .filter_map(|l| l.split_once('|'))
            .map(|(d, f)| FeatureProposal::new(d.trim(), f.trim()))
            .collect())
    }
}

impl<S: Scalar> DiagnosticKg<S> {
    pub fn subcategory_view(&self, subcategory: &str) -> Result<SubcategoryView, KgError> {
        let diseases = self
            .diseases_under(subcategory)?
            .into_iter()
            .map(|d| {
                let fs = self.features_of(d).into_iter().map(|f| label_of(f).to_string()).collect();
                (label_of(d).to_string(), fs)
            })
            .collect();
        Ok(SubcategoryView {
            subcategory: label_of(subcategory).to_string(),
            diseases,
        })
    }

    /// Adds augmenter-proposed features. A proposal is dropped when the
    /// feature is already linked to every disease of the subcategory, when it
    /// names a disease outside the subcategory, or when the label is blank.
    /// Nothing is ever removed.
    pub fn augment<A: Augmenter + ?Sized>(mut self, augmenter: &A) -> Result<Self, KgError> {
        let subs: Vec<String> = self.ids_in(Tier::Subcategory).into_iter().map(String::from).collect();
        for sub in subs {
            let view = self.subcategory_view(&sub)?;
            let mut proposals = augmenter.propose(&view)?;
            for p in &mut proposals {
                p.feature = normalize_feature(&p.feature);
            }
            proposals.sort();
            proposals.dedup();
            let siblings: Vec<String> = self.diseases_under(&sub)?.into_iter().map(String::from).collect();
            for p in proposals {
                let did = Tier::Disease.node_id(p.disease.trim());
                if !siblings.contains(&did) || p.feature.is_empty() {
                    continue;
                }
                let fid = Tier::Feature.node_id(&p.feature);
                if self.has_edge(&did, &fid) {
                    continue;
                }
                if siblings.iter().all(|d| self.has_edge(d, &fid)) {
                    continue;
                }
                self.add_node(Tier::Feature, &p.feature, None);
                self.add_edge(&did, &fid, None)?;
            }
        }
        self.validate()?;
        Ok(self)
    }
}
