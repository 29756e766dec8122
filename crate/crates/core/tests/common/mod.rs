#![allow(dead_code)]

use chrono::{DateTime, Utc};
use hscn_core::corpus::{HsCnPair, Origin, PairId, Source};
use hscn_core::orchestrator::Pipeline;
use hscn_core::review::{ReviewScore, Score};

pub const HS: [&str; 4] = [
    "Foreign workers are stealing our jobs.",
    "Immigrants bring crime wherever they settle.",
    "Islam is incompatible with democracy.",
    "Every mosque in this country is a training camp for extremists.",
];

pub fn fixed_time() -> DateTime<Utc> {
    DateTime::from_timestamp(1_600_000_000, 0).unwrap()
}

pub fn generated(id: &str, hs: &str, cn: &str) -> HsCnPair {
    HsCnPair::new(PairId::new(id), hs, cn, Source::Generated)
        .unwrap()
        .with_origin(Origin::Conditioned)
        .with_created_at(fixed_time())
}

pub fn seed(id: &str, hs: &str, cn: &str) -> HsCnPair {
    HsCnPair::new(PairId::new(id), hs, cn, Source::SeedDataset)
        .unwrap()
        .with_created_at(fixed_time())
}

pub fn score(id: &str, annotator: &str, value: u8, bad_hs: bool) -> ReviewScore {
    ReviewScore {
        pair_id: PairId::new(id),
        annotator_id: annotator.to_owned(),
        score: Score::new(value).unwrap(),
        bad_hs,
        elapsed_ms: 35_000,
    }
}

/// Judgment pairs producing each tier: geq2, geq1_only, discarded, bad_hs.
pub const TIER_SCORES: [[(u8, bool); 2]; 4] = [
    [(2, false), (2, false)],
    [(1, false), (2, false)],
    [(0, false), (2, false)],
    [(2, true), (1, false)],
];

/// Generated pairs with two judgments each, `counts[t]` of tier `t` in
/// `TIER_SCORES` order. Ids are `p00000`, `p00001`, ...
pub fn tier_stream(counts: [usize; 4]) -> Pipeline {
    let mut p = Pipeline::in_memory();
    let mut n = 0usize;
    for (tier, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            let id = format!("p{n:05}");
            let hs = HS[n % HS.len()];
            p.add_pair(generated(&id, hs, &format!("Counter narrative number {n} for tier {tier}.")), None)
                .unwrap();
            for (a, (v, bad)) in TIER_SCORES[tier].iter().enumerate() {
                p.submit_score(score(&id, &format!("ann{a}"), *v, *bad), None).unwrap();
            }
            n += 1;
        }
    }
    p
}

pub fn operators(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("op{i}")).collect()
}
