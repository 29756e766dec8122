use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::text::NormalizationPolicy;

pub const MAX_ORDER: usize = 4;

/// Sufficient statistics of corpus BLEU.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BleuStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub candidate_len: u64,
    pub reference_len: u64,
}

impl BleuStats {
    pub fn brevity_penalty(&self) -> f64 {
        if self.candidate_len == 0 {
            0.0
        } else if self.candidate_len >= self.reference_len {
            1.0
        } else {
            (1.0 - self.reference_len as f64 / self.candidate_len as f64).exp()
        }
    }

    /// Modified precision per order. Orders above 1 with no match are
    /// smoothed to (0 + 1) / (total + 1).
    pub fn precisions(&self) -> [f64; MAX_ORDER] {
        let mut p = [0.0; MAX_ORDER];
        for n in 0..MAX_ORDER {
            p[n] = if n > 0 && self.matches[n] == 0 {
                1.0 / (self.totals[n] + 1) as f64
            } else if self.totals[n] == 0 {
                0.0
            } else {
                self.matches[n] as f64 / self.totals[n] as f64
            };
        }
        p
    }

    pub fn score(&self) -> f64 {
        let p = self.precisions();
        if p[0] == 0.0 {
            return 0.0;
        }
        let log_mean = p.iter().map(|x| x.ln()).sum::<f64>() / MAX_ORDER as f64;
        self.brevity_penalty() * log_mean.exp()
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    for g in tokens.windows(n) {
        *counts.entry(g).or_default() += 1;
    }
    counts
}

/// Accumulates clipped n-gram matches against the union of references
/// (max count per n-gram across references) and the closest reference
/// length (shorter wins ties).
pub fn bleu_stats<C, R>(
    candidates: &[C],
    references: &[Vec<R>],
    policy: &NormalizationPolicy,
) -> Result<BleuStats>
where
    C: AsRef<str>,
    R: AsRef<str>,
{
    if references.len() < candidates.len() {
        return Err(Error::MissingReference(references.len()));
    }
    let mut stats = BleuStats::default();
    for (i, cand) in candidates.iter().enumerate() {
        let refs = &references[i];
        if refs.is_empty() {
            return Err(Error::MissingReference(i));
        }
        let cand = policy.tokens(cand.as_ref());
        let refs: Vec<Vec<String>> = refs.iter().map(|r| policy.tokens(r.as_ref())).collect();

        stats.candidate_len += cand.len() as u64;
        let closest = refs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&len| (len.abs_diff(cand.len()), len))
            .unwrap_or(0);
        stats.reference_len += closest as u64;

        for n in 1..=MAX_ORDER {
            let cand_counts = ngram_counts(&cand, n);
            let mut max_ref: HashMap<&[String], u64> = HashMap::new();
            for r in &refs {
                for (g, c) in ngram_counts(r, n) {
                    let e = max_ref.entry(g).or_default();
                    *e = (*e).max(c);
                }
            }
            for (g, c) in &cand_counts {
                stats.matches[n - 1] += (*c).min(max_ref.get(g).copied().unwrap_or(0));
            }
            stats.totals[n - 1] += cand.len().saturating_sub(n - 1) as u64;
        }
    }
    Ok(stats)
}

/// Corpus-level BLEU with uniform weights over orders 1..=4. `references[i]`
/// holds the reference list of `candidates[i]`.
pub fn corpus_bleu<C, R>(
    candidates: &[C],
    references: &[Vec<R>],
    policy: &NormalizationPolicy,
) -> Result<f64>
where
    C: AsRef<str>,
    R: AsRef<str>,
{
    Ok(bleu_stats(candidates, references, policy)?.score())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> NormalizationPolicy {
        NormalizationPolicy::default()
    }

    #[test]
    fn identical_corpus_is_one() {
        let c = ["please refrain from using such words", "this is not true"];
        let r = vec![vec![c[0]], vec![c[1]]];
        assert!((corpus_bleu(&c, &r, &p()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_unigram_overlap_is_zero() {
        let c = ["alpha beta gamma delta"];
        let r = vec![vec!["one two three four"]];
        assert_eq!(corpus_bleu(&c, &r, &p()).unwrap(), 0.0);
    }

    #[test]
    fn missing_reference() {
        let c = ["a b", "c d"];
        let r: Vec<Vec<&str>> = vec![vec!["a b"], vec![]];
        assert!(matches!(corpus_bleu(&c, &r, &p()), Err(Error::MissingReference(1))));
        let short: Vec<Vec<&str>> = vec![vec!["a b"]];
        assert!(corpus_bleu(&c, &short, &p()).is_err());
    }

    #[test]
    fn clipping_limits_repeated_words() {
        // "the the the the" vs "the cat": unigram matches clipped to 1 of 4.
        let s = bleu_stats(&["the the the the"], &[vec!["the cat"]], &p()).unwrap();
        assert_eq!(s.matches[0], 1);
        assert_eq!(s.totals[0], 4);
    }

    #[test]
    fn brevity_penalty_uses_closest_reference() {
        let s = bleu_stats(&["a b c"], &[vec!["a b c d e f", "a b c d"]], &p()).unwrap();
        assert_eq!(s.reference_len, 4);
        assert!((s.brevity_penalty() - (1.0f64 - 4.0 / 3.0).exp()).abs() < 1e-15);
    }
}
