use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::NormalizationPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoveltyVariant {
    /// 1 - similarity to the nearest training CN.
    #[default]
    Max,
    /// 1 - mean similarity over all training CNs.
    Mean,
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Token sets of a training corpus, computed once and reused across
/// candidates.
#[derive(Debug, Clone)]
pub struct NoveltyIndex {
    sets: Vec<BTreeSet<String>>,
    policy: NormalizationPolicy,
}

impl NoveltyIndex {
    pub fn new<S: AsRef<str>>(training_cns: &[S], policy: NormalizationPolicy) -> Result<Self> {
        if training_cns.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let sets = training_cns.iter().map(|t| policy.token_set(t.as_ref())).collect();
        Ok(Self { sets, policy })
    }

    pub fn novelty(&self, candidate: &str, variant: NoveltyVariant) -> f64 {
        let cand = self.policy.token_set(candidate);
        let sims = self.sets.iter().map(|s| jaccard(&cand, s));
        let sim = match variant {
            NoveltyVariant::Max => sims.fold(0.0, f64::max),
            NoveltyVariant::Mean => sims.sum::<f64>() / self.sets.len() as f64,
        };
        1.0 - sim
    }

    /// Mean novelty over candidates; `None` when there are none.
    pub fn corpus_novelty<S: AsRef<str>>(&self, candidates: &[S], variant: NoveltyVariant) -> Option<f64> {
        if candidates.is_empty() {
            return None;
        }
        let total: f64 = candidates.iter().map(|c| self.novelty(c.as_ref(), variant)).sum();
        Some(total / candidates.len() as f64)
    }
}

pub fn novelty<S: AsRef<str>>(
    candidate: &str,
    training_cns: &[S],
    policy: &NormalizationPolicy,
) -> Result<f64> {
    Ok(NoveltyIndex::new(training_cns, *policy)?.novelty(candidate, NoveltyVariant::Max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_zero() {
        let p = NormalizationPolicy::default();
        assert_eq!(novelty("This is not true.", &["this is NOT true"], &p).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_is_one() {
        let p = NormalizationPolicy::default();
        assert_eq!(novelty("evidence please", &["muslims are people"], &p).unwrap(), 1.0);
    }

    #[test]
    fn hand_computed_jaccard() {
        // {do,you,have,a,link} vs {any,source,do,you}: |∩|=2, |∪|=7.
        let p = NormalizationPolicy::default();
        let training = ["Any source, do you?", "completely unrelated words"];
        let n = novelty("Do you have a link?", &training, &p).unwrap();
        assert!((n - (1.0 - 2.0 / 7.0)).abs() < 1e-12);
        assert!((n - 0.714).abs() < 1e-3);
    }

    #[test]
    fn mean_variant_is_at_least_max_variant() {
        let idx = NoveltyIndex::new(&["a b c", "d e f", "a x"], Default::default()).unwrap();
        let max = idx.novelty("a b", NoveltyVariant::Max);
        let mean = idx.novelty("a b", NoveltyVariant::Mean);
        assert!(mean >= max);
    }

    #[test]
    fn empty_training_set() {
        let none: [&str; 0] = [];
        assert!(matches!(
            novelty("x", &none, &Default::default()),
            Err(Error::EmptyTrainingSet)
        ));
    }
}
