mod common;

use std::collections::{BTreeMap, BTreeSet};

use common::*;
use hscn_core::corpus::{Origin, PairId};
use hscn_core::orchestrator::{PipelineConfig, ReviewerMode, Sampling};
use hscn_core::review::{FilterTier, Label, PairScore, PairScorer, ScorerKind};
use hscn_core::{Error, Result};

struct ApproveAll;

impl PairScorer for ApproveAll {
    fn score_texts(&self, pair_id: PairId, _hs: &str, _cn: &str) -> Result<PairScore> {
        Ok(PairScore {
            pair_id,
            label: Label::Suitable,
            confidence: 1.0,
            scorer: ScorerKind::Baseline,
        })
    }
}

fn all_pairs(mode: ReviewerMode) -> PipelineConfig {
    PipelineConfig {
        session_size: None,
        ..PipelineConfig::new(mode)
    }
}

#[test]
fn human_geq2_routes_ten_percent_of_tier_stream() {
    let mut p = tier_stream([276, 626, 1723, 145]);
    p.open_experiment("e", operators(5), 1).unwrap();
    let plan = p.route_condition("e", &all_pairs(ReviewerMode::HumanGeq2), None).unwrap();
    let pct = plan.passed.len() as f64 * 100.0 / 2770.0;
    assert_eq!(plan.passed.len(), 276);
    assert_eq!(plan.assignments.len(), 276);
    assert!((pct - 10.0).abs() <= 0.05, "{pct}");
}

#[test]
fn human_geq1_is_cumulative() {
    let mut p = tier_stream([276, 626, 1723, 145]);
    p.open_experiment("e", operators(5), 1).unwrap();
    let plan = p.route_condition("e", &all_pairs(ReviewerMode::HumanGeq1), None).unwrap();
    assert_eq!(plan.passed.len(), 902);
    assert_eq!(plan.filtered_out.len(), 1868);
}

#[test]
fn approve_all_machine_routes_everything() {
    let mut p = tier_stream([10, 10, 10, 10]);
    let pool = p.generated_pool();
    p.machine_review(&ApproveAll, &pool).unwrap();
    p.open_experiment("e", operators(4), 1).unwrap();
    let plan = p.route_condition("e", &all_pairs(ReviewerMode::Machine), None).unwrap();
    assert_eq!(plan.passed.len(), 40);
    assert!(plan.filtered_out.is_empty());
    assert_eq!(plan.assignments.len(), 40);
}

#[test]
fn machine_mode_without_scores_is_insufficient() {
    let mut p = tier_stream([3, 0, 0, 0]);
    p.open_experiment("e", operators(1), 1).unwrap();
    let err = p.route_condition("e", &all_pairs(ReviewerMode::Machine), None).unwrap_err();
    assert!(matches!(err, Error::InsufficientPool(_)), "{err}");
}

#[test]
fn human_mode_over_pending_pairs_is_insufficient() {
    let mut p = tier_stream([2, 0, 0, 0]);
    p.add_pair(generated("late", HS[0], "Not reviewed yet."), None).unwrap();
    p.open_experiment("e", operators(1), 1).unwrap();
    let err = p.route_condition("e", &all_pairs(ReviewerMode::HumanGeq1), None).unwrap_err();
    assert!(matches!(err, Error::InsufficientPool(_)), "{err}");
}

#[test]
fn stratified_sessions_are_distinct_and_proportional() {
    // (origin, tier scores, count): four strata of 300 pairs in total.
    let strata = [
        (Origin::Conditioned, 0usize, 60usize),
        (Origin::Conditioned, 2, 90),
        (Origin::Harvested, 0, 30),
        (Origin::Harvested, 1, 120),
    ];
    let mut p = hscn_core::orchestrator::Pipeline::in_memory();
    let mut n = 0;
    for (origin, tier, count) in strata {
        for _ in 0..count {
            let id = format!("s{n:04}");
            let pair = generated(&id, HS[n % 4], &format!("Stratified answer {n}.")).with_origin(origin);
            p.add_pair(pair, None).unwrap();
            for (a, (v, bad)) in TIER_SCORES[tier].iter().enumerate() {
                p.submit_score(score(&id, &format!("a{a}"), *v, *bad), None).unwrap();
            }
            n += 1;
        }
    }
    p.open_experiment("e", operators(5), 3).unwrap();
    let cfg = PipelineConfig {
        sampling: Sampling::Stratified,
        session_size: Some(20),
        rng_seed: 11,
        ..PipelineConfig::new(ReviewerMode::ExpertDirect)
    };
    let plan = p.route_condition("e", &cfg, None).unwrap();

    let ids: BTreeSet<_> = plan.assignments.iter().map(|a| a.pair_id.clone()).collect();
    assert_eq!(ids.len(), 100);
    let mut per_op: BTreeMap<&str, usize> = BTreeMap::new();
    for a in &plan.assignments {
        *per_op.entry(a.operator.as_str()).or_default() += 1;
    }
    assert!(per_op.values().all(|&c| c == 20), "{per_op:?}");

    let state = p.state();
    let mut got: BTreeMap<(Origin, FilterTier), usize> = BTreeMap::new();
    for id in &ids {
        let origin = state.pair(id).unwrap().origin.unwrap();
        *got.entry((origin, state.tier(id).unwrap())).or_default() += 1;
    }
    for (origin, tier, count) in strata {
        let key = (origin, [FilterTier::Geq2, FilterTier::Geq1Only, FilterTier::Discarded][tier]);
        let expected = count as f64 * 100.0 / 300.0;
        let actual = *got.get(&key).unwrap_or(&0) as f64;
        assert!((actual - expected).abs() <= 1.0, "{key:?}: {actual} vs {expected}");
    }
}

#[test]
fn a_pair_is_routed_to_one_condition_only() {
    let mut p = tier_stream([20, 0, 0, 0]);
    p.open_experiment("e", operators(2), 1).unwrap();
    let first = p.route_condition("e", &all_pairs(ReviewerMode::HumanGeq2), None).unwrap();
    assert_eq!(first.assignments.len(), 20);
    let second = p.route_condition("e", &all_pairs(ReviewerMode::HumanGeq1), None).unwrap();
    assert_eq!(second.passed.len(), 20);
    assert!(second.assignments.is_empty());
    assert!(p.state().check_conservation().is_ok());
}
