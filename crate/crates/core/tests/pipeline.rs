mod common;

use std::sync::Arc;

use common::*;
use medrag_core::llm::{ReplayLlm, StaticLlm, UnavailableLlm};
use medrag_core::orchestrator::{
    ConsultationSession, EvidenceKind, LlmQuestionGenerator, OracleLlm, PipelineConfig, SessionStatus, TurnError,
    TurnMode, TurnOutcome,
};
use medrag_core::kg::{DiagnosticKg, KgConfig, RuleBasedExtractor};
use medrag_core::{Engine, OfflineEncoder};
use proptest::prelude::*;

fn replay() -> ReplayLlm {
    ReplayLlm::from_file(fixture("lumbar_llm.json")).unwrap()
}

fn session(kind: EvidenceKind, text: &str) -> ConsultationSession {
    let mut s = ConsultationSession::new("t");
    s.add_evidence(kind, text).unwrap();
    s
}

#[test]
fn lumbar_query_gets_lumbar_canal_stenosis() {
    let engine = lumbar_engine();
    for kind in [EvidenceKind::TypedQuery, EvidenceKind::Utterance] {
        for mode in [TurnMode::Interactive, TurnMode::RecommendOnly] {
            let mut s = session(kind, LUMBAR_QUERY);
            let TurnOutcome::Recommendation(r) = engine.run_turn(&mut s, &replay(), mode).unwrap() else {
                panic!("expected a recommendation");
            };
            assert_eq!(r.diagnosis, LUMBAR_DIAGNOSIS);
            assert_eq!(r.follow_up_question.as_deref(), Some(LUMBAR_FOLLOW_UP));
            assert!(r.treatment.is_some() && r.medication.is_some());
            assert_eq!(r.supporting_ehr_ids[0], "ehr-001");
            assert!(r.verdict.sufficient);
            assert_eq!(r.subcategory, "subcategory:Lumbar spine disorders");
            assert_eq!(s.status(), SessionStatus::Concluded);
            assert_eq!(s.latest_recommendation(), Some(&r));
        }
    }
}

#[test]
fn prompt_carries_query_verbatim_and_is_stable() {
    let engine = lumbar_engine();
    let s = session(EvidenceKind::TypedQuery, LUMBAR_QUERY);
    let a = engine.prompt_for(&s).unwrap();
    let b = engine.prompt_for(&s).unwrap();
    assert_eq!(a, b);
    assert!(a.section("Patient evidence").unwrap().contains("Pain from right lower back radiates"));
    let titles: Vec<_> = a.sections.iter().map(|s| s.title.as_str()).collect();
    assert_eq!(
        titles,
        ["Instruction", "Patient evidence", "Retrieved EHRs", "Knowledge graph triplets", "Output format"]
    );
    assert!(a.section("Knowledge graph triplets").unwrap().contains("pain worse walking downhill"));
}

#[test]
fn sparse_query_asks_the_downhill_question_then_recommends() {
    let engine = lumbar_engine().with_question_generator(Arc::new(LlmQuestionGenerator::new(replay())));
    let mut s = session(EvidenceKind::Utterance, "lower back pain");
    let TurnOutcome::FollowUp(q) = engine.run_turn(&mut s, &OracleLlm, TurnMode::Interactive).unwrap() else {
        panic!("expected a question");
    };
    assert_eq!(q.question, LUMBAR_FOLLOW_UP);
    assert_eq!(q.feature_label, DOWNHILL_FEATURE);
    assert!(!q.verdict.sufficient);
    assert_eq!(s.rounds_used(), 1);
    assert_eq!(s.status(), SessionStatus::AwaitingAnswer);

    s.add_evidence(EvidenceKind::Utterance, "yes, worse walking downhill").unwrap();
    assert_eq!(s.evidence()[1].kind, EvidenceKind::Answer);
    assert!(s.asked_features().contains(&q.feature_id));
    // next question, if any, must be about something else
    if let TurnOutcome::FollowUp(next) = engine.run_turn(&mut s, &OracleLlm, TurnMode::Interactive).unwrap() {
        assert_ne!(next.feature_id, q.feature_id);
    }
}

#[test]
fn template_used_when_question_model_has_no_fixture() {
    let engine = lumbar_engine().with_question_generator(Arc::new(LlmQuestionGenerator::new(ReplayLlm::default())));
    let mut s = session(EvidenceKind::Utterance, "lower back pain");
    let TurnOutcome::FollowUp(q) = engine.run_turn(&mut s, &OracleLlm, TurnMode::Interactive).unwrap() else {
        panic!("expected a question");
    };
    assert_eq!(q.question, "Does the patient have pain worse walking downhill?");
}

#[test]
fn round_cap_falls_through_to_recommendation() {
    let config = PipelineConfig { max_rounds: 0, ..PipelineConfig::default() };
    let base = lumbar_engine();
    let engine = Engine::new(base.corpus().clone(), base.kg().clone(), Arc::new(OfflineEncoder::default()), config)
        .unwrap();
    let mut s = session(EvidenceKind::Utterance, "lower back pain");
    let TurnOutcome::Recommendation(r) = engine.run_turn(&mut s, &OracleLlm, TurnMode::Interactive).unwrap() else {
        panic!("expected a recommendation");
    };
    assert!(!r.verdict.sufficient);
    assert_eq!(r.diagnosis, LUMBAR_DIAGNOSIS);
    // the critical feature's question is offered when the model gives none
    assert_eq!(r.follow_up_question.as_deref(), Some("Does the patient have pain worse walking downhill?"));
}

#[test]
fn failed_turns_leave_the_session_alone() {
    let engine = lumbar_engine();
    let mut s = session(EvidenceKind::TypedQuery, LUMBAR_QUERY);
    let before = serde_json::to_string(&s).unwrap();

    let err = engine.run_turn(&mut s, &UnavailableLlm, TurnMode::Interactive).unwrap_err();
    assert!(matches!(err, TurnError::LlmUnavailable(_)));
    assert_eq!(serde_json::to_string(&s).unwrap(), before);

    let err = engine
        .run_turn(&mut s, &StaticLlm("I am not sure.".into()), TurnMode::Interactive)
        .unwrap_err();
    match err {
        TurnError::ParseFailure { raw, .. } => assert_eq!(raw, "I am not sure."),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(serde_json::to_string(&s).unwrap(), before);

    let err = engine.run_turn(&mut s, &ReplayLlm::default(), TurnMode::Interactive).unwrap_err();
    assert!(matches!(err, TurnError::LlmUnavailable(_)));
}

#[test]
fn concluded_and_empty_sessions_are_rejected() {
    let engine = lumbar_engine();
    let mut empty = ConsultationSession::new("e");
    assert!(matches!(engine.run_turn(&mut empty, &OracleLlm, TurnMode::Interactive), Err(TurnError::EmptySession)));
    assert!(matches!(engine.check_sufficiency(&empty), Err(TurnError::EmptySession)));

    let mut s = session(EvidenceKind::TypedQuery, LUMBAR_QUERY);
    engine.run_turn(&mut s, &OracleLlm, TurnMode::Interactive).unwrap();
    assert!(matches!(engine.run_turn(&mut s, &OracleLlm, TurnMode::Interactive), Err(TurnError::Concluded)));
    assert!(matches!(s.add_evidence(EvidenceKind::Utterance, "more"), Err(TurnError::Concluded)));
}

fn synth_engine(threshold: f64) -> Engine {
    let corpus = synth_corpus(21);
    let kg = DiagnosticKg::build(&corpus, &KgConfig::default(), &RuleBasedExtractor).unwrap();
    let config = PipelineConfig { sufficiency_threshold: threshold, ..PipelineConfig::default() };
    Engine::new(corpus, kg, Arc::new(OfflineEncoder::default()), config).unwrap()
}

fn word() -> impl Strategy<Value = String> {
    (0usize..12, 0usize..6, prop::bool::ANY).prop_map(|(d, j, left)| {
        let f = synth_feature(d, j);
        let mut parts = f.split(' ');
        let (a, b) = (parts.next().unwrap().to_string(), parts.next().unwrap().to_string());
        if left { a } else { b }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn supporting_ids_are_the_retrieval_in_rank_order(words in prop::collection::vec(word(), 1..8)) {
        let engine = synth_engine(0.8);
        let text = words.join(" ");
        let mut s = session(EvidenceKind::TypedQuery, &text);
        let TurnOutcome::Recommendation(r) = engine.run_turn(&mut s, &OracleLlm, TurnMode::RecommendOnly).unwrap() else {
            panic!("recommend-only turn asked a question");
        };
        let hits = engine.corpus().retrieve_similar(engine.index(), engine.encoder(), &text, engine.config().k).unwrap();
        let ids: Vec<_> = hits.iter().map(|(rec, _)| rec.id.clone()).collect();
        let scores: Vec<_> = hits.iter().map(|(_, s)| *s).collect();
        prop_assert_eq!(&r.supporting_ehr_ids, &ids);
        prop_assert_eq!(&r.supporting_scores, &scores);
        let top = engine.corpus().get(&ids[0]).unwrap().diagnosis.clone().unwrap();
        prop_assert_eq!(r.diagnosis, top);
    }

    #[test]
    fn questions_only_follow_insufficient_verdicts(
        words in prop::collection::vec(word(), 1..8),
        threshold in 0.3f64..1.0,
    ) {
        let engine = synth_engine(threshold);
        let mut s = session(EvidenceKind::Utterance, &words.join(" "));
        let verdict = engine.check_sufficiency(&s).unwrap();
        match engine.run_turn(&mut s, &OracleLlm, TurnMode::Interactive).unwrap() {
            TurnOutcome::FollowUp(q) => {
                prop_assert!(!verdict.sufficient);
                prop_assert_eq!(q.verdict, verdict);
            }
            TurnOutcome::Recommendation(r) => prop_assert_eq!(r.verdict, verdict),
        }
    }

    #[test]
    fn deterministic_stub_means_deterministic_pipeline(words in prop::collection::vec(word(), 1..8)) {
        let engine = synth_engine(0.8);
        let text = words.join(" ");
        let run = || {
            let mut s = session(EvidenceKind::Utterance, &text);
            let out = engine.run_turn(&mut s, &OracleLlm, TurnMode::Interactive).unwrap();
            serde_json::to_string(&(out, s)).unwrap()
        };
        prop_assert_eq!(run(), run());
    }
}
