mod common;

use std::sync::Arc;

use common::*;
use medrag_core::eval::{evaluate, load_cases, parse_cases, render_table, EvalCase, EvalError, Modality};
use medrag_core::kg::{DiagnosticKg, KgConfig, RuleBasedExtractor};
use medrag_core::llm::{StaticLlm, UnavailableLlm};
use medrag_core::orchestrator::{OracleLlm, PipelineConfig};
use medrag_core::{Engine, OfflineEncoder};

fn engine() -> Engine {
    let corpus = synth_corpus(4);
    let kg = DiagnosticKg::build(&corpus, &KgConfig::default(), &RuleBasedExtractor).unwrap();
    Engine::new(corpus, kg, Arc::new(OfflineEncoder::default()), PipelineConfig::default()).unwrap()
}

fn case(id: &str, text: &str, d: usize) -> EvalCase {
    EvalCase {
        case_id: id.into(),
        input_text: text.into(),
        gold_category: synth_category(d),
        gold_subcategory: synth_subcategory(d),
        gold_diagnosis: synth_disease(d),
    }
}

#[test]
fn exact_record_texts_score_perfectly() {
    let e = engine();
    let cases: Vec<EvalCase> = e
        .corpus()
        .records()
        .iter()
        .step_by(5)
        .enumerate()
        .map(|(d, r)| case(&format!("c{d:02}"), &r.document_text(), d))
        .collect();
    let report = evaluate(&e, &OracleLlm, &cases, "oracle-stub", Modality::Text).unwrap();
    assert_eq!(report.n_cases, 12);
    assert_eq!((report.l1_accuracy, report.l2_accuracy, report.l3_accuracy), (100.0, 100.0, 100.0));
}

#[test]
fn sibling_prediction_counts_for_upper_levels_only() {
    let e = engine();
    // Disease 02 is Disease 01's sibling in Group 01.
    let llm = StaticLlm(format!("{{\"diagnosis\": \"{}\"}}", synth_disease(1)));
    let cases = vec![case("c1", &synth_feature(0, 0), 0)];
    let report = evaluate(&e, &llm, &cases, "static", Modality::Text).unwrap();
    let row = &report.rows[0];
    assert!(row.l1 && row.l2 && !row.l3);
    assert_eq!((report.l1_accuracy, report.l2_accuracy, report.l3_accuracy), (100.0, 100.0, 0.0));

    // Disease 03 shares only the category.
    let llm = StaticLlm(format!("{{\"diagnosis\": \"  {}  \"}}", synth_disease(2).to_uppercase()));
    let report = evaluate(&e, &llm, &cases, "static", Modality::Text).unwrap();
    let row = &report.rows[0];
    assert!(row.l1 && !row.l2 && !row.l3);
}

#[test]
fn predictions_outside_the_graph_miss_everywhere() {
    let e = engine();
    let llm = StaticLlm("{\"diagnosis\": \"Sciatica\"}".into());
    let report = evaluate(&e, &llm, &[case("c1", "k0m0", 0)], "static", Modality::Text).unwrap();
    assert_eq!((report.l1_accuracy, report.l2_accuracy, report.l3_accuracy), (0.0, 0.0, 0.0));
    assert_eq!(report.rows[0].predicted_diagnosis.as_deref(), Some("Sciatica"));
}

#[test]
fn parse_failures_are_scored_as_misses() {
    let e = engine();
    let report = evaluate(&e, &StaticLlm("no idea".into()), &[case("c1", "k0m0", 0)], "static", Modality::Text).unwrap();
    assert!(report.rows[0].error.is_some());
    assert_eq!(report.l1_accuracy, 0.0);
}

#[test]
fn unknown_gold_labels_are_rejected_up_front() {
    let e = engine();
    let mut bad = case("c7", "k0m0", 0);
    bad.gold_diagnosis = "Nonexistent".into();
    let err = evaluate(&e, &OracleLlm, &[case("c1", "k0m0", 0), bad], "oracle-stub", Modality::Text).unwrap_err();
    assert!(matches!(err, EvalError::UnresolvableGoldLabel(id) if id == "c7"));
}

#[test]
fn unreachable_model_aborts_the_run() {
    let e = engine();
    let err = evaluate(&e, &UnavailableLlm, &[case("c1", "k0m0", 0)], "x", Modality::Text).unwrap_err();
    assert!(matches!(err, EvalError::Upstream { .. }));
}

#[test]
fn rows_are_sorted_by_case_id() {
    let e = engine();
    let cases = vec![case("b", "k1m1", 1), case("a", "k0m0", 0), case("c", "k2m2", 2)];
    let report = evaluate(&e, &OracleLlm, &cases, "oracle-stub", Modality::Text).unwrap();
    let ids: Vec<_> = report.rows.iter().map(|r| r.case_id.as_str()).collect();
    assert_eq!(ids, ["a", "b", "c"]);
}

#[test]
fn voice_noise_is_reproducible() {
    let e = engine();
    let cases: Vec<EvalCase> = (0..12).map(|d| case(&format!("c{d}"), &synth_feature(d, 1), d)).collect();
    let voice = Modality::Voice { noise_rate: 0.5, seed: 42 };
    let a = evaluate(&e, &OracleLlm, &cases, "oracle-stub", voice).unwrap();
    let b = evaluate(&e, &OracleLlm, &cases, "oracle-stub", voice).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.modal, "voice");
    let text = evaluate(&e, &OracleLlm, &cases, "oracle-stub", Modality::Text).unwrap();
    assert!(a.l3_accuracy <= text.l3_accuracy);
}

#[test]
fn cases_load_from_jsonl_and_render() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cases.jsonl");
    let cases = [case("c1", "k0m0", 0), case("c2", "k1m1", 1)];
    let body: String = cases.iter().map(|c| serde_json::to_string(c).unwrap() + "\n").collect();
    std::fs::write(&path, body + "\n").unwrap();
    assert_eq!(load_cases(&path).unwrap(), cases);
    assert!(matches!(load_cases(dir.path().join("missing")), Err(EvalError::Io(_))));
    assert!(parse_cases("not json").is_err());

    let report = evaluate(&engine(), &OracleLlm, &cases, "oracle-stub", Modality::Text).unwrap();
    let table = render_table(&[report]);
    let lines: Vec<_> = table.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("Backbone LLM"));
    assert!(lines[1].starts_with("oracle-stub"));
    assert!(lines[1].contains("text"));
}
