//! Offline stand-in for the machine reviewer: logistic regression over
//! hashed character and word features of the joined pair.

use std::collections::BTreeMap;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LabeledPair, PairScore, PairScorer, ScorerKind, DEFAULT_THRESHOLD};
use crate::corpus::PairId;
use crate::error::{Error, Result};
use crate::metrics::jaccard;
use crate::text::NormalizationPolicy;

const SEPARATOR: &str = " \u{241f} ";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    /// log2 of the hashed feature space size.
    pub hash_bits: u32,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub threshold: f64,
    pub rng_seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            hash_bits: 18,
            epochs: 15,
            learning_rate: 0.5,
            l2: 1e-6,
            threshold: DEFAULT_THRESHOLD,
            rng_seed: 0,
        }
    }
}

type Features = Vec<(u32, f64)>;

fn bucket(bits: u32, kind: u8, s: &str) -> u32 {
    let mut h = FnvHasher::default();
    h.write_u8(kind);
    h.write(s.as_bytes());
    (h.finish() & ((1u64 << bits) - 1)) as u32
}

/// Sparse, L2-normalized feature vector of a pair.
fn featurize(hs: &str, cn: &str, bits: u32) -> Features {
    let policy = NormalizationPolicy::default();
    let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
    let mut add = |idx: u32, v: f64| *acc.entry(idx).or_default() += v;

    for tok in policy.tokens(hs) {
        add(bucket(bits, b'h', &tok), 1.0);
    }
    for tok in policy.tokens(cn) {
        add(bucket(bits, b'c', &tok), 1.0);
    }
    let joined: Vec<char> = format!("{}{SEPARATOR}{}", policy.normalize(hs), policy.normalize(cn))
        .chars()
        .collect();
    for n in 3..=5 {
        for gram in joined.windows(n) {
            add(bucket(bits, b'0' + n as u8, &gram.iter().collect::<String>()), 1.0);
        }
    }

    let norm = acc.values().map(|v| v * v).sum::<f64>().sqrt();
    let mut out: Features = acc.into_iter().map(|(k, v)| (k, v / norm)).collect();

    // Pair-level overlap cues, kept out of the normalization so they stay
    // on a fixed scale.
    let (hs_set, cn_set) = (policy.token_set(hs), policy.token_set(cn));
    out.push((bucket(bits, b'o', "jaccard"), jaccard(&hs_set, &cn_set)));
    if policy.normalize(hs) == policy.normalize(cn) {
        out.push((bucket(bits, b'o', "echo"), 1.0));
    }
    out
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineScorer {
    pub config: BaselineConfig,
    pub bias: f64,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StoredModel {
    config: BaselineConfig,
    bias: f64,
    weights: Vec<(u32, f64)>,
}

impl BaselineScorer {
    pub fn train(dataset: &[LabeledPair], config: BaselineConfig) -> Result<Self> {
        let positives = dataset.iter().filter(|p| p.label.is_suitable()).count();
        if positives == 0 || positives == dataset.len() {
            return Err(Error::SingleClassDataset);
        }
        if !(1..=26).contains(&config.hash_bits) {
            return Err(Error::InvalidConfig(format!("hash_bits {} not in 1..=26", config.hash_bits)));
        }
        let examples: Vec<(Features, f64)> = dataset
            .iter()
            .map(|p| (featurize(&p.hs, &p.cn, config.hash_bits), if p.label.is_suitable() { 1.0 } else { 0.0 }))
            .collect();

        let mut model = Self {
            config,
            bias: 0.0,
            weights: vec![0.0; 1 << config.hash_bits],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        for epoch in 0..config.epochs {
            order.shuffle(&mut rng);
            let lr = config.learning_rate / (1.0 + epoch as f64 * 0.1);
            for &i in &order {
                let (x, y) = &examples[i];
                let grad = model.predict(x) - y;
                for &(k, v) in x {
                    let w = &mut model.weights[k as usize];
                    *w -= lr * (grad * v + config.l2 * *w);
                }
                model.bias -= lr * grad;
            }
        }
        Ok(model)
    }

    fn predict(&self, x: &Features) -> f64 {
        let z = self.bias + x.iter().map(|&(k, v)| self.weights[k as usize] * v).sum::<f64>();
        sigmoid(z)
    }

    pub fn confidence(&self, hs: &str, cn: &str) -> f64 {
        self.predict(&featurize(hs, cn, self.config.hash_bits))
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let stored = StoredModel {
            config: self.config,
            bias: self.bias,
            weights: self
                .weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(i, w)| (i as u32, *w))
                .collect(),
        };
        std::fs::write(path, serde_json::to_vec(&stored)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let stored: StoredModel = serde_json::from_slice(&std::fs::read(path)?)?;
        let size = 1usize << stored.config.hash_bits;
        let mut weights = vec![0.0; size];
        for (i, w) in stored.weights {
            *weights
                .get_mut(i as usize)
                .ok_or_else(|| Error::InvalidConfig(format!("weight index {i} out of range")))? = w;
        }
        Ok(Self {
            config: stored.config,
            bias: stored.bias,
            weights,
        })
    }
}

impl PairScorer for BaselineScorer {
    fn score_texts(&self, pair_id: PairId, hs: &str, cn: &str) -> Result<PairScore> {
        PairScore::from_confidence(pair_id, self.confidence(hs, cn), self.config.threshold, ScorerKind::Baseline)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::review::{Label, Provenance};

    fn lp(hs: &str, cn: &str, suitable: bool) -> LabeledPair {
        LabeledPair {
            hs: hs.into(),
            cn: cn.into(),
            label: Label::from_bool(suitable),
            provenance: Provenance::SeedDataset,
            pair_id: None,
        }
    }

    fn tiny() -> Vec<LabeledPair> {
        vec![
            lp("they are all criminals", "most people are law abiding citizens", true),
            lp("they should leave", "diversity makes communities stronger", true),
            lp("they are all criminals", "they are all criminals", false),
            lp("they should leave", "they should leave", false),
        ]
    }

    #[test]
    fn single_class_rejected() {
        let data: Vec<_> = tiny().into_iter().filter(|p| p.label.is_suitable()).collect();
        assert!(matches!(
            BaselineScorer::train(&data, Default::default()),
            Err(Error::SingleClassDataset)
        ));
        assert!(matches!(
            BaselineScorer::train(&[], Default::default()),
            Err(Error::SingleClassDataset)
        ));
    }

    #[test]
    fn deterministic_under_seed() {
        let a = BaselineScorer::train(&tiny(), Default::default()).unwrap();
        let b = BaselineScorer::train(&tiny(), Default::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn echo_scores_unsuitable() {
        let m = BaselineScorer::train(&tiny(), Default::default()).unwrap();
        let s = m
            .score_texts(PairId::new("x"), "they are dangerous", "they are dangerous")
            .unwrap();
        assert_eq!(s.label, Label::Unsuitable);
    }

    #[test]
    fn save_and_load() {
        let m = BaselineScorer::train(&tiny(), BaselineConfig { hash_bits: 12, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        m.save(&path).unwrap();
        assert_eq!(BaselineScorer::load(&path).unwrap(), m);
    }
}
