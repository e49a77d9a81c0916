#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use medrag_core::kg::{DiagnosticKg, KgConfig, RuleBasedExtractor};
use medrag_core::orchestrator::{Engine, PipelineConfig};
use medrag_core::{Corpus, OfflineEncoder};

pub const LUMBAR_QUERY: &str = "Provide diagnosis suggestions for the following patient: Age: 47. \
Functional status: Difficulty walking. \
Description: Pain from right lower back radiates down to buttock and right posterior lower limb.";

pub const LUMBAR_DIAGNOSIS: &str = "Lumbar canal stenosis";
pub const LUMBAR_FOLLOW_UP: &str = "Is the pain worse when standing or walking down hill?";
pub const DOWNHILL_FEATURE: &str = "pain worse walking downhill";

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn lumbar_engine() -> Engine {
    let encoder = OfflineEncoder::default();
    let corpus = Corpus::ingest(fixture("lumbar_corpus.jsonl"))
        .unwrap()
        .embed(&encoder)
        .unwrap();
    let kg = DiagnosticKg::build(&corpus, &KgConfig::default(), &RuleBasedExtractor).unwrap();
    Engine::new(corpus, kg, Arc::new(encoder), PipelineConfig::default()).unwrap()
}

use medrag_core::Record;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SYNTH_DISEASES: usize = 12;
pub const SYNTH_FEATURES_PER_DISEASE: usize = 6;

pub fn synth_disease(d: usize) -> String {
    format!("Disease {:02}", d + 1)
}

/// Two diseases per subcategory, two subcategories per category.
pub fn synth_subcategory(d: usize) -> String {
    format!("Group {:02}", d / 2 + 1)
}

pub fn synth_category(d: usize) -> String {
    format!("System {}", d / 4 + 1)
}

/// Feature phrase `j` of disease `d`; two tokens unique to the pair.
pub fn synth_feature(d: usize, j: usize) -> String {
    format!("k{d}m{j} k{d}n{j}")
}

/// Text made mostly of disease `d`'s phrases with one phrase borrowed from
/// its sibling.
pub fn synth_text(rng: &mut ChaCha8Rng, d: usize) -> String {
    let mut idx: Vec<usize> = (0..SYNTH_FEATURES_PER_DISEASE).collect();
    idx.shuffle(rng);
    let take = rng.gen_range(2..=4);
    let mut parts: Vec<String> = idx[..take].iter().map(|&j| synth_feature(d, j)).collect();
    let sibling = d ^ 1;
    parts.push(synth_feature(sibling, rng.gen_range(0..SYNTH_FEATURES_PER_DISEASE)));
    parts.join("; ")
}

/// 60 labelled records, 5 per disease, 12 diseases.
pub fn synth_records(seed: u64) -> Vec<Record> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for d in 0..SYNTH_DISEASES {
        for r in 0..5 {
            out.push(
                Record::new(format!("s{:02}-{r}", d + 1), synth_text(&mut rng, d))
                    .with_diagnosis(synth_disease(d))
                    .with_hierarchy(synth_category(d), synth_subcategory(d))
                    .with_demographic("age", (20 + rng.gen_range(0..60)).to_string()),
            );
        }
    }
    out
}

pub fn synth_corpus(seed: u64) -> Corpus {
    Corpus::from_records(synth_records(seed))
        .unwrap()
        .embed(&OfflineEncoder::default())
        .unwrap()
}
