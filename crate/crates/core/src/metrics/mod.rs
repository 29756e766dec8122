//! Corpus diversity, novelty, overlap and effort measures.

mod bleu;
mod edit;
mod novelty;
mod rr;

pub use bleu::{bleu_stats, corpus_bleu, BleuStats, MAX_ORDER};
pub use edit::{edit_distance, edit_rate};
pub use novelty::{jaccard, novelty, NoveltyIndex, NoveltyVariant};
pub use rr::{repetition_rate, stream_rate, windows, RRConfig};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{CnType, HsCnPair};
use crate::error::{Error, Result};

/// Percentage of each CN type over a labeled sample. Every type appears in
/// the output, with 0.0 for absent ones.
pub fn type_distribution(pairs: &[HsCnPair]) -> Result<BTreeMap<CnType, f64>> {
    let labels = pairs
        .iter()
        .map(|p| p.cn_type.ok_or_else(|| Error::UnlabeledPair(p.id.to_string())))
        .collect::<Result<Vec<_>>>()?;
    type_distribution_of(&labels)
}

pub fn type_distribution_of(labels: &[CnType]) -> Result<BTreeMap<CnType, f64>> {
    if labels.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut out: BTreeMap<CnType, f64> = CnType::ALL.iter().map(|&t| (t, 0.0)).collect();
    for &l in labels {
        *out.get_mut(&l).expect("all types present") += 1.0;
    }
    for v in out.values_mut() {
        *v = *v * 100.0 / labels.len() as f64;
    }
    Ok(out)
}

/// Metric bundle emitted by the `metrics` CLI and used in reports. Fields
/// that were not requested or not computable are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_pairs: usize,
    pub rr: Option<f64>,
    pub novelty: Option<f64>,
    pub novelty_variant: Option<NoveltyVariant>,
    pub bleu: Option<f64>,
    pub mean_hter: Option<f64>,
    pub tier_counts: BTreeMap<String, usize>,
    pub tier_percentages: BTreeMap<String, f64>,
    pub type_distribution: BTreeMap<CnType, f64>,
}

impl CorpusStats {
    /// A plain-text rendering for terminals.
    pub fn table(&self) -> String {
        let mut out = format!("{:<24}{}\n", "pairs", self.n_pairs);
        let mut row = |name: &str, v: Option<f64>| {
            if let Some(v) = v {
                out.push_str(&format!("{name:<24}{v:.4}\n"));
            }
        };
        row("RR", self.rr);
        row("novelty", self.novelty);
        row("BLEU", self.bleu);
        row("mean HTER", self.mean_hter);
        for (tier, count) in &self.tier_counts {
            let pct = self.tier_percentages.get(tier).copied().unwrap_or(0.0);
            out.push_str(&format!("{tier:<24}{count} ({pct:.1}%)\n"));
        }
        for (t, pct) in &self.type_distribution {
            out.push_str(&format!("{:<24}{pct:.1}%\n", t.as_str()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{PairId, Source};

    fn labeled(counts: &[(CnType, usize)]) -> Vec<HsCnPair> {
        let mut out = Vec::new();
        for &(t, n) in counts {
            for i in 0..n {
                out.push(
                    HsCnPair::new(PairId::new(format!("{}-{i}", t.as_str())), "h", "c", Source::SeedDataset)
                        .unwrap()
                        .with_cn_type(t),
                );
            }
        }
        out
    }

    #[test]
    fn mostly_other_distribution() {
        let d = type_distribution(&labeled(&[
            (CnType::Denouncing, 10),
            (CnType::DenouncingPlusOther, 9),
            (CnType::Other, 81),
        ]))
        .unwrap();
        assert_eq!(d[&CnType::Other], 81.0);
        assert_eq!(d[&CnType::Denouncing], 10.0);
        assert_eq!(d[&CnType::DenouncingPlusOther], 9.0);
        assert_eq!(d[&CnType::Hostile], 0.0);
    }

    #[test]
    fn mostly_hostile_distribution() {
        let d = type_distribution(&labeled(&[
            (CnType::Hostile, 50),
            (CnType::Denouncing, 16),
            (CnType::Other, 34),
        ]))
        .unwrap();
        assert_eq!(d[&CnType::Hostile], 50.0);
        assert_eq!(d[&CnType::Denouncing], 16.0);
        assert_eq!(d[&CnType::Other], 34.0);
        assert!((d.values().sum::<f64>() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn single_type() {
        let d = type_distribution(&labeled(&[(CnType::Fact, 7)])).unwrap();
        assert_eq!(d[&CnType::Fact], 100.0);
    }

    #[test]
    fn unlabeled_pair_errors() {
        let mut pairs = labeled(&[(CnType::Fact, 2)]);
        pairs[1].cn_type = None;
        assert!(matches!(type_distribution(&pairs), Err(Error::UnlabeledPair(_))));
    }
}
