use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FilterTier, Label};
use crate::corpus::{PairId, Source, StoreState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    SeedDataset,
    TierGeq2,
    TierAtLeastOneZero,
    VerbatimHsHs,
    RandomHsPair,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub hs: String,
    pub cn: String,
    pub label: Label,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_id: Option<PairId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierDatasetSpec {
    pub seed_positives: bool,
    pub geq2_positives: bool,
    pub zero_negatives: bool,
    /// HS texts repeated verbatim as their own CN.
    pub verbatim_hs_hs: usize,
    /// HS texts paired with a different random HS as CN.
    pub random_hs_pairs: usize,
    pub balance: bool,
    pub rng_seed: u64,
}

impl Default for ClassifierDatasetSpec {
    fn default() -> Self {
        Self {
            seed_positives: true,
            geq2_positives: true,
            zero_negatives: true,
            verbatim_hs_hs: 50,
            random_hs_pairs: 50,
            balance: true,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub positives: usize,
    pub negatives: usize,
    pub by_provenance: BTreeMap<Provenance, usize>,
    /// Pool sizes before balancing.
    pub available: BTreeMap<Provenance, usize>,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierDataset {
    pub pairs: Vec<LabeledPair>,
    pub manifest: DatasetManifest,
}

/// Source pools, usually taken from a store via [`ClassifierPools::from_store`].
#[derive(Debug, Clone, Default)]
pub struct ClassifierPools {
    pub seed: Vec<(PairId, String, String)>,
    pub geq2: Vec<(PairId, String, String)>,
    pub at_least_one_zero: Vec<(PairId, String, String)>,
}

impl ClassifierPools {
    pub fn from_store(state: &StoreState) -> Result<Self> {
        let mut pools = Self::default();
        for pair in state.pairs.values() {
            let entry = (
                pair.id.clone(),
                pair.hate_speech.clone(),
                pair.counter_narrative.clone(),
            );
            if pair.source == Source::SeedDataset {
                pools.seed.push(entry);
                continue;
            }
            match state.tier(&pair.id)? {
                FilterTier::Geq2 => pools.geq2.push(entry),
                FilterTier::Discarded => pools.at_least_one_zero.push(entry),
                _ => {}
            }
        }
        Ok(pools)
    }
}

pub fn build_classifier_dataset(state: &StoreState, spec: &ClassifierDatasetSpec) -> Result<ClassifierDataset> {
    build_from_pools(&ClassifierPools::from_store(state)?, spec)
}

fn labeled(entries: &[(PairId, String, String)], label: Label, provenance: Provenance) -> Vec<LabeledPair> {
    entries
        .iter()
        .map(|(id, hs, cn)| LabeledPair {
            hs: hs.clone(),
            cn: cn.clone(),
            label,
            provenance,
            pair_id: Some(id.clone()),
        })
        .collect()
}

fn subsample<T>(items: Vec<T>, k: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    if items.len() <= k {
        return items;
    }
    let mut keep: Vec<usize> = index::sample(rng, items.len(), k).into_vec();
    keep.sort_unstable();
    let mut keep = keep.into_iter().peekable();
    items
        .into_iter()
        .enumerate()
        .filter_map(|(i, x)| (keep.peek() == Some(&i)).then(|| {
            keep.next();
            x
        }))
        .collect()
}

pub fn build_from_pools(pools: &ClassifierPools, spec: &ClassifierDatasetSpec) -> Result<ClassifierDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut available = BTreeMap::new();

    let mut positives = Vec::new();
    if spec.seed_positives {
        positives.extend(labeled(&pools.seed, Label::Suitable, Provenance::SeedDataset));
        available.insert(Provenance::SeedDataset, pools.seed.len());
    }
    if spec.geq2_positives {
        positives.extend(labeled(&pools.geq2, Label::Suitable, Provenance::TierGeq2));
        available.insert(Provenance::TierGeq2, pools.geq2.len());
    }

    let mut organic_negatives = Vec::new();
    if spec.zero_negatives {
        organic_negatives = labeled(&pools.at_least_one_zero, Label::Unsuitable, Provenance::TierAtLeastOneZero);
        available.insert(Provenance::TierAtLeastOneZero, organic_negatives.len());
    }

    // Synthetic negatives draw on distinct seed HS texts.
    let hs_pool: Vec<&str> = pools
        .seed
        .iter()
        .map(|(_, hs, _)| hs.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut shortfalls = Vec::new();
    if spec.verbatim_hs_hs > hs_pool.len() {
        shortfalls.push(format!(
            "verbatim_hs_hs: need {} distinct seed HS, have {}",
            spec.verbatim_hs_hs,
            hs_pool.len()
        ));
    }
    if spec.random_hs_pairs > 0 && hs_pool.len() < 2 {
        shortfalls.push(format!(
            "random_hs_pair: need at least 2 distinct seed HS, have {}",
            hs_pool.len()
        ));
    }
    if positives.is_empty() {
        shortfalls.push("positives: no seed or geq2 pairs".into());
    }
    let synthetic_count = if shortfalls.is_empty() { spec.verbatim_hs_hs + spec.random_hs_pairs } else { 0 };
    if organic_negatives.is_empty() && synthetic_count == 0 {
        shortfalls.push("negatives: no at-least-one-0 pairs and no synthetic negatives".into());
    }
    if !shortfalls.is_empty() {
        return Err(Error::InsufficientPool(shortfalls.join("; ")));
    }

    let mut synthetic = Vec::new();
    for i in index::sample(&mut rng, hs_pool.len(), spec.verbatim_hs_hs) {
        synthetic.push(LabeledPair {
            hs: hs_pool[i].to_owned(),
            cn: hs_pool[i].to_owned(),
            label: Label::Unsuitable,
            provenance: Provenance::VerbatimHsHs,
            pair_id: None,
        });
    }
    available.insert(Provenance::VerbatimHsHs, spec.verbatim_hs_hs);
    for _ in 0..spec.random_hs_pairs {
        let a = rng.random_range(0..hs_pool.len());
        let mut b = rng.random_range(0..hs_pool.len() - 1);
        if b >= a {
            b += 1;
        }
        synthetic.push(LabeledPair {
            hs: hs_pool[a].to_owned(),
            cn: hs_pool[b].to_owned(),
            label: Label::Unsuitable,
            provenance: Provenance::RandomHsPair,
            pair_id: None,
        });
    }
    available.insert(Provenance::RandomHsPair, spec.random_hs_pairs);

    if spec.balance {
        let n_neg = organic_negatives.len() + synthetic.len();
        if positives.len() > n_neg {
            positives = subsample(positives, n_neg, &mut rng);
        } else if n_neg > positives.len() {
            // Keep synthetic negatives whenever they fit; trim organic ones first.
            let target = positives.len();
            if synthetic.len() >= target {
                synthetic = subsample(synthetic, target, &mut rng);
                organic_negatives.clear();
            } else {
                organic_negatives = subsample(organic_negatives, target - synthetic.len(), &mut rng);
            }
        }
    }

    let mut pairs = positives;
    pairs.extend(organic_negatives);
    pairs.extend(synthetic);
    pairs.shuffle(&mut rng);

    let mut manifest = DatasetManifest {
        available,
        rng_seed: spec.rng_seed,
        ..Default::default()
    };
    for p in &pairs {
        *manifest.by_provenance.entry(p.provenance).or_default() += 1;
        match p.label {
            Label::Suitable => manifest.positives += 1,
            Label::Unsuitable => manifest.negatives += 1,
        }
    }
    Ok(ClassifierDataset { pairs, manifest })
}

pub fn write_labeled(path: &Path, pairs: &[LabeledPair]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for p in pairs {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labeled(path: &Path) -> Result<Vec<LabeledPair>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::CorruptRecord {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(prefix: &str, n: usize) -> Vec<(PairId, String, String)> {
        (0..n)
            .map(|i| {
                (
                    PairId::new(format!("{prefix}{i}")),
                    format!("{prefix} hate speech number {i}"),
                    format!("{prefix} counter narrative number {i}"),
                )
            })
            .collect()
    }

    #[test]
    fn verbatim_negatives_repeat_hs() {
        let pools = ClassifierPools {
            seed: pool("seed", 1200),
            geq2: pool("good", 173),
            at_least_one_zero: pool("bad", 1723),
        };
        let ds = build_from_pools(&pools, &ClassifierDatasetSpec::default()).unwrap();
        let verbatim: Vec<_> = ds.pairs.iter().filter(|p| p.provenance == Provenance::VerbatimHsHs).collect();
        assert_eq!(verbatim.len(), 50);
        assert!(verbatim.iter().all(|p| p.hs == p.cn));
        assert_eq!(ds.manifest.by_provenance[&Provenance::VerbatimHsHs], 50);
        assert_eq!(ds.manifest.by_provenance[&Provenance::RandomHsPair], 50);
        assert!(ds
            .pairs
            .iter()
            .filter(|p| p.provenance == Provenance::RandomHsPair)
            .all(|p| p.hs != p.cn));
        // 1373 positives against 1823 negatives: balanced at 1373 each.
        assert_eq!(ds.manifest.positives, 1373);
        assert_eq!(ds.manifest.negatives, 1373);
        assert_eq!(ds.manifest.by_provenance.values().sum::<usize>(), ds.pairs.len());
    }

    #[test]
    fn balances_down_to_smaller_class() {
        let pools = ClassifierPools {
            seed: pool("seed", 10),
            geq2: vec![],
            at_least_one_zero: pool("bad", 1000),
        };
        let spec = ClassifierDatasetSpec {
            verbatim_hs_hs: 0,
            random_hs_pairs: 0,
            rng_seed: 7,
            ..Default::default()
        };
        let a = build_from_pools(&pools, &spec).unwrap();
        assert_eq!((a.manifest.positives, a.manifest.negatives), (10, 10));
        let b = build_from_pools(&pools, &spec).unwrap();
        assert_eq!(a, b);
        let c = build_from_pools(&pools, &ClassifierDatasetSpec { rng_seed: 8, ..spec }).unwrap();
        assert_ne!(a.pairs, c.pairs);
    }

    #[test]
    fn unbalanced_keeps_everything() {
        let pools = ClassifierPools {
            seed: pool("seed", 10),
            geq2: pool("good", 5),
            at_least_one_zero: pool("bad", 40),
        };
        let spec = ClassifierDatasetSpec {
            verbatim_hs_hs: 3,
            random_hs_pairs: 4,
            balance: false,
            ..Default::default()
        };
        let ds = build_from_pools(&pools, &spec).unwrap();
        assert_eq!(ds.manifest.positives, 15);
        assert_eq!(ds.manifest.negatives, 47);
    }

    #[test]
    fn insufficient_pool_reports_each_source() {
        let pools = ClassifierPools {
            seed: pool("seed", 1),
            ..Default::default()
        };
        let err = build_from_pools(&pools, &ClassifierDatasetSpec::default()).unwrap_err();
        let Error::InsufficientPool(msg) = err else { panic!("wrong error") };
        assert!(msg.contains("verbatim_hs_hs"));
        assert!(msg.contains("random_hs_pair"));
    }

    #[test]
    fn labeled_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clf.jsonl");
        let pairs = vec![LabeledPair {
            hs: "h".into(),
            cn: "c".into(),
            label: Label::Suitable,
            provenance: Provenance::SeedDataset,
            pair_id: None,
        }];
        write_labeled(&path, &pairs).unwrap();
        let line = std::fs::read_to_string(&path).unwrap();
        assert_eq!(line.trim(), r#"{"hs":"h","cn":"c","label":"suitable","provenance":"seed_dataset"}"#);
        assert_eq!(read_labeled(&path).unwrap(), pairs);
    }
}
