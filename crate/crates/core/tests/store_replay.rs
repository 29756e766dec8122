mod common;

use std::fs::OpenOptions;
use std::io::Write;

use common::*;
use hscn_core::corpus::{EventLog, PairId, PairState, Source, StoreState};
use hscn_core::orchestrator::{Action, ExpertDecision, Pipeline, PipelineConfig, ReportOptions, ReviewerMode};
use hscn_core::Error;

fn decide(p: &mut Pipeline, op: &str, action: Action, edited: Option<&str>) {
    let item = p.next_for_operator(op).expect("pending item");
    p.record_decision(
        ExpertDecision {
            pair_id: item.pair_id,
            operator_id: op.to_owned(),
            action,
            edited_cn: edited.map(str::to_owned),
            elapsed_ms: 40_000,
        },
        None,
    )
    .unwrap();
}

fn lifecycle(p: &mut Pipeline) {
    p.add_pair(seed("seed0", HS[0], "Migrants pay taxes and fill jobs nobody else takes."), None)
        .unwrap();
    for i in 0..12 {
        let id = format!("g{i:02}");
        p.add_pair(generated(&id, HS[i % 4], &format!("Generated answer {i} with some words.")), None)
            .unwrap();
        let tier = i % 4;
        for (a, (v, bad)) in TIER_SCORES[tier].iter().enumerate() {
            p.submit_score(score(&id, &format!("ann{a}"), *v, *bad), Some(format!("{id}/{a}")))
                .unwrap();
        }
    }
    p.open_experiment("exp", operators(2), 9).unwrap();
    let cfg = PipelineConfig {
        session_size: None,
        ..PipelineConfig::new(ReviewerMode::HumanGeq1)
    };
    p.route_condition("exp", &cfg, None).unwrap();
    decide(p, "op0", Action::Validate, None);
    decide(p, "op0", Action::Edit, Some("An edited answer with different words."));
    decide(p, "op1", Action::Discard, None);
}

#[test]
fn reopen_reproduces_state_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (export, report) = {
        let mut p = Pipeline::open(dir.path()).unwrap();
        lifecycle(&mut p);
        let r = p.effort_report("exp", ReviewerMode::HumanGeq1, &ReportOptions::default()).unwrap();
        (p.state().export().unwrap(), serde_json::to_string(&r).unwrap())
    };
    let p = Pipeline::open(dir.path()).unwrap();
    assert_eq!(p.state().export().unwrap(), export);
    let r = p.effort_report("exp", ReviewerMode::HumanGeq1, &ReportOptions::default()).unwrap();
    assert_eq!(serde_json::to_string(&r).unwrap(), report);
}

#[test]
fn snapshot_plus_tail_equals_full_replay() {
    let dir = tempfile::tempdir().unwrap();
    let mut log = EventLog::open(dir.path()).unwrap();
    log.snapshot_every = Some(7);
    let mut p = Pipeline::new(log);
    lifecycle(&mut p);
    assert!(dir.path().join("snapshot.json").exists());
    let from_scratch = StoreState::replay(p.log().records()).unwrap();
    let reopened = Pipeline::open(dir.path()).unwrap();
    assert_eq!(reopened.state().export().unwrap(), from_scratch.export().unwrap());
    assert_eq!(reopened.state().last_seq, p.state().last_seq);
}

#[test]
fn conservation_holds_at_every_prefix() {
    let mut p = Pipeline::in_memory();
    lifecycle(&mut p);
    let records = p.log().records();
    for k in 0..=records.len() {
        let state = StoreState::replay(&records[..k]).unwrap();
        state.check_conservation().unwrap_or_else(|e| panic!("prefix {k}: {e}"));
    }
}

#[test]
fn edits_export_the_post_edited_pair() {
    let mut p = Pipeline::in_memory();
    lifecycle(&mut p);
    let accepted = p.export_accepted();
    assert_eq!(accepted.len(), 2);
    let edited = accepted.iter().find(|r| r.source == Some(Source::PostEdited)).unwrap();
    assert_eq!(edited.cn, "An edited answer with different words.");
    let original = edited.replaces.clone().unwrap();
    assert!(accepted.iter().all(|r| r.id.as_ref() != Some(&original)));
    assert_eq!(p.state().pair(&original).unwrap().state, PairState::Accepted);
}

#[test]
fn idempotent_keys_survive_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let seq = {
        let mut p = Pipeline::open(dir.path()).unwrap();
        p.add_pair(generated("x", HS[0], "Some answer."), None).unwrap();
        p.submit_score(score("x", "a", 2, false), Some("k1".into())).unwrap()
    };
    let mut p = Pipeline::open(dir.path()).unwrap();
    assert_eq!(p.submit_score(score("x", "a", 2, false), Some("k1".into())).unwrap(), seq);
    assert_eq!(p.state().scores[&PairId::new("x")].len(), 1);
}

#[test]
fn torn_last_line_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    {
        let mut p = Pipeline::open(dir.path()).unwrap();
        p.add_pair(generated("x", HS[0], "Some answer."), None).unwrap();
    }
    let mut f = OpenOptions::new().append(true).open(dir.path().join("events.jsonl")).unwrap();
    f.write_all(b"{\"seq\":2,\"at\":").unwrap();
    let err = Pipeline::open(dir.path()).unwrap_err();
    assert!(matches!(err, Error::CorruptRecord { line: 2, .. }), "{err}");
}

#[test]
fn invalid_events_are_not_appended() {
    let mut p = Pipeline::in_memory();
    p.add_pair(generated("x", HS[0], "Some answer."), None).unwrap();
    let before = p.log().records().len();
    assert!(p.submit_score(score("missing", "a", 2, false), None).is_err());
    p.submit_score(score("x", "a", 2, false), None).unwrap();
    assert!(p.submit_score(score("x", "a", 1, false), None).is_err());
    assert_eq!(p.log().records().len(), before + 1);
}
