//! Human and machine reviewers: two-judgment tier filtering, classifier data
//! construction, pair scorers and their evaluation.

mod baseline;
mod dataset;
mod eval;
mod remote;

pub use baseline::{BaselineConfig, BaselineScorer};
pub use dataset::{
    build_classifier_dataset, read_labeled, write_labeled, ClassifierDataset, ClassifierDatasetSpec,
    DatasetManifest, LabeledPair, Provenance,
};
pub use eval::{evaluate_classifier, evaluate_scores, ClassifierEval, ConfusionMatrix};
pub use remote::{RemoteScorer, ScoreRequest, ScoreResponse};

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::PairId;
use crate::error::{Error, Result};

/// A 0-3 suitability judgment: 0 not suitable, 1 suitable with small
/// modifications, 2 suitable, 3 extremely good.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct Score(u8);

impl Score {
    pub fn new(v: u8) -> Result<Self> {
        Self::try_from(v as i64)
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl TryFrom<i64> for Score {
    type Error = Error;

    fn try_from(v: i64) -> Result<Self> {
        if (0..=3).contains(&v) {
            Ok(Self(v as u8))
        } else {
            Err(Error::ScoreOutOfRange(v))
        }
    }
}

impl From<Score> for u8 {
    fn from(s: Score) -> u8 {
        s.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewScore {
    pub pair_id: PairId,
    pub annotator_id: String,
    pub score: Score,
    #[serde(default)]
    pub bad_hs: bool,
    #[serde(default)]
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterTier {
    BadHs,
    Discarded,
    Geq1Only,
    Geq2,
    Pending,
}

impl FilterTier {
    pub fn as_str(self) -> &'static str {
        match self {
            FilterTier::BadHs => "bad_hs",
            FilterTier::Discarded => "discarded",
            FilterTier::Geq1Only => "geq1_only",
            FilterTier::Geq2 => "geq2",
            FilterTier::Pending => "pending",
        }
    }

    /// Passes the "both annotators scored at least 1" threshold.
    pub fn passes_geq1(self) -> bool {
        matches!(self, FilterTier::Geq1Only | FilterTier::Geq2)
    }

    pub fn passes_geq2(self) -> bool {
        self == FilterTier::Geq2
    }
}

impl fmt::Display for FilterTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Combines the judgments for one pair. Fewer than two judgments is
/// `Pending`; with two, a bad-HS flag from either annotator wins, then any 0
/// discards, then both >= 2 is `Geq2`, otherwise `Geq1Only`.
pub fn aggregate(scores: &[ReviewScore]) -> Result<FilterTier> {
    if let Some(first) = scores.first() {
        if let Some(other) = scores.iter().find(|s| s.pair_id != first.pair_id) {
            return Err(Error::InvalidConfig(format!(
                "judgments for different pairs: {} and {}",
                first.pair_id, other.pair_id
            )));
        }
    }
    let mut annotators = HashSet::new();
    for s in scores {
        if !annotators.insert(s.annotator_id.as_str()) {
            return Err(Error::DuplicateAnnotator {
                pair: s.pair_id.to_string(),
                annotator: s.annotator_id.clone(),
            });
        }
    }
    match scores {
        [] | [_] => Ok(FilterTier::Pending),
        [a, b] => Ok(if a.bad_hs || b.bad_hs {
            FilterTier::BadHs
        } else if a.score.0 == 0 || b.score.0 == 0 {
            FilterTier::Discarded
        } else if a.score.0 >= 2 && b.score.0 >= 2 {
            FilterTier::Geq2
        } else {
            FilterTier::Geq1Only
        }),
        _ => Err(Error::TooManyJudgments(scores[0].pair_id.to_string())),
    }
}

/// Tier tallies over a pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TierCounts {
    pub geq2: usize,
    pub geq1_only: usize,
    pub discarded: usize,
    pub bad_hs: usize,
    pub pending: usize,
}

impl TierCounts {
    pub fn from_tiers(tiers: impl IntoIterator<Item = FilterTier>) -> Self {
        let mut c = Self::default();
        for t in tiers {
            c.add(t);
        }
        c
    }

    pub fn add(&mut self, t: FilterTier) {
        match t {
            FilterTier::Geq2 => self.geq2 += 1,
            FilterTier::Geq1Only => self.geq1_only += 1,
            FilterTier::Discarded => self.discarded += 1,
            FilterTier::BadHs => self.bad_hs += 1,
            FilterTier::Pending => self.pending += 1,
        }
    }

    /// Fully annotated pairs, the denominator of every tier percentage.
    pub fn annotated(&self) -> usize {
        self.geq2 + self.geq1_only + self.discarded + self.bad_hs
    }

    /// Cumulative count of pairs passing the >= 1 threshold.
    pub fn geq1(&self) -> usize {
        self.geq2 + self.geq1_only
    }

    fn pct(&self, n: usize) -> f64 {
        match self.annotated() {
            0 => 0.0,
            total => n as f64 * 100.0 / total as f64,
        }
    }

    /// Threshold-style summary: `geq1` is cumulative (includes `geq2`).
    pub fn report(&self) -> TierReport {
        TierReport {
            annotated: self.annotated(),
            pending: self.pending,
            geq2: (self.geq2, self.pct(self.geq2)),
            geq1: (self.geq1(), self.pct(self.geq1())),
            at_least_one_zero: (self.discarded, self.pct(self.discarded)),
            bad_hs: (self.bad_hs, self.pct(self.bad_hs)),
        }
    }

    pub fn as_map(&self) -> BTreeMap<String, usize> {
        BTreeMap::from([
            ("geq2".to_owned(), self.geq2),
            ("geq1_only".to_owned(), self.geq1_only),
            ("discarded".to_owned(), self.discarded),
            ("bad_hs".to_owned(), self.bad_hs),
            ("pending".to_owned(), self.pending),
        ])
    }
}

/// Raw counts with their percentage of annotated pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierReport {
    pub annotated: usize,
    pub pending: usize,
    pub geq2: (usize, f64),
    pub geq1: (usize, f64),
    pub at_least_one_zero: (usize, f64),
    pub bad_hs: (usize, f64),
}

impl fmt::Display for TierReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<18}{:>7}{:>12}", "threshold", "count", "percentage")?;
        for (name, (n, pct)) in [
            ("reviewer>=2", self.geq2),
            ("reviewer>=1", self.geq1),
            ("at least one 0", self.at_least_one_zero),
            ("bad HS", self.bad_hs),
        ] {
            writeln!(f, "{name:<18}{n:>7}{pct:>11.1}%")?;
        }
        write!(f, "{:<18}{:>7}", "annotated", self.annotated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Suitable,
    Unsuitable,
}

impl Label {
    pub fn from_bool(suitable: bool) -> Self {
        if suitable {
            Label::Suitable
        } else {
            Label::Unsuitable
        }
    }

    pub fn is_suitable(self) -> bool {
        self == Label::Suitable
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Remote,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub pair_id: PairId,
    pub label: Label,
    pub confidence: f64,
    pub scorer: ScorerKind,
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

impl PairScore {
    /// Labels by `confidence >= threshold`.
    pub fn from_confidence(pair_id: PairId, confidence: f64, threshold: f64, scorer: ScorerKind) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::MalformedResponse(format!("confidence {confidence} outside [0, 1]")));
        }
        Ok(Self {
            pair_id,
            label: Label::from_bool(confidence >= threshold),
            confidence,
            scorer,
        })
    }
}

/// Anything that can judge a single HS-CN pair synchronously.
pub trait PairScorer {
    fn score_texts(&self, pair_id: PairId, hs: &str, cn: &str) -> Result<PairScore>;
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(annotator: &str, score: u8, bad_hs: bool) -> ReviewScore {
        ReviewScore {
            pair_id: PairId::new("p"),
            annotator_id: annotator.into(),
            score: Score::new(score).unwrap(),
            bad_hs,
            elapsed_ms: 35_000,
        }
    }

    fn tier(a: u8, b: u8) -> FilterTier {
        aggregate(&[s("a", a, false), s("b", b, false)]).unwrap()
    }

    #[test]
    fn rule_instances() {
        assert_eq!(tier(2, 3), FilterTier::Geq2);
        assert_eq!(tier(1, 2), FilterTier::Geq1Only);
        assert_eq!(tier(0, 3), FilterTier::Discarded);
    }

    #[test]
    fn bad_hs_takes_precedence() {
        assert_eq!(aggregate(&[s("a", 3, true), s("b", 3, false)]).unwrap(), FilterTier::BadHs);
    }

    #[test]
    fn pending_and_errors() {
        assert_eq!(aggregate(&[]).unwrap(), FilterTier::Pending);
        assert_eq!(aggregate(&[s("a", 3, false)]).unwrap(), FilterTier::Pending);
        assert!(matches!(
            aggregate(&[s("a", 3, false), s("a", 2, false)]),
            Err(Error::DuplicateAnnotator { .. })
        ));
        assert!(matches!(
            aggregate(&[s("a", 3, false), s("b", 2, false), s("c", 2, false)]),
            Err(Error::TooManyJudgments(_))
        ));
    }

    #[test]
    fn score_range() {
        assert!(Score::new(4).is_err());
        assert!(serde_json::from_str::<Score>("-1").is_err());
        assert_eq!(serde_json::from_str::<Score>("3").unwrap().value(), 3);
    }

    #[test]
    fn tier_report_percentages() {
        let c = TierCounts { geq2: 276, geq1_only: 626, discarded: 1723, bad_hs: 145, pending: 0 };
        let r = c.report();
        assert_eq!(r.annotated, 2770);
        assert_eq!(r.geq1.0, 902);
        assert!(format!("{r}").contains("32.6%"));
    }

    fn rank(t: FilterTier) -> u8 {
        match t {
            FilterTier::BadHs => 0,
            FilterTier::Discarded => 1,
            FilterTier::Geq1Only => 2,
            FilterTier::Geq2 => 3,
            FilterTier::Pending => unreachable!(),
        }
    }

    proptest! {
        #[test]
        fn symmetric(a in 0u8..4, b in 0u8..4, fa: bool, fb: bool) {
            let x = aggregate(&[s("x", a, fa), s("y", b, fb)]).unwrap();
            let y = aggregate(&[s("y", b, fb), s("x", a, fa)]).unwrap();
            prop_assert_eq!(x, y);
        }

        #[test]
        fn monotone_in_scores(a in 0u8..4, b in 0u8..4, bump in 1u8..4, fa: bool, fb: bool) {
            let before = aggregate(&[s("x", a, fa), s("y", b, fb)]).unwrap();
            let raised = (a + bump).min(3);
            let after = aggregate(&[s("x", raised, fa), s("y", b, fb)]).unwrap();
            prop_assert!(rank(after) >= rank(before));
        }

        #[test]
        fn geq2_implies_geq1(a in 0u8..4, b in 0u8..4) {
            let t = tier(a, b);
            if t.passes_geq2() {
                prop_assert!(t.passes_geq1());
                prop_assert!(a >= 1 && b >= 1);
            }
        }
    }
}
