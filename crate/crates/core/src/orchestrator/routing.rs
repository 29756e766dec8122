use std::collections::BTreeMap;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PipelineConfig, ReviewerMode, Sampling};
use crate::corpus::{Assignment, Origin, PairId, PairState, PipelineEvent, StoreState};
use crate::error::{Error, Result};
use crate::review::FilterTier;

/// Outcome of routing one condition, ready to be appended as a single event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutePlan {
    pub experiment: String,
    pub config: PipelineConfig,
    pub passed: Vec<PairId>,
    pub filtered_out: Vec<PairId>,
    pub assignments: Vec<Assignment>,
}

impl RoutePlan {
    pub fn into_event(self) -> PipelineEvent {
        PipelineEvent::ConditionRouted {
            experiment: self.experiment,
            config: self.config,
            passed: self.passed,
            filtered_out: self.filtered_out,
            assignments: self.assignments,
        }
    }
}

/// Largest-remainder apportionment of `total` draws over strata of the given
/// sizes. Ties on the remainder go to the earlier stratum.
pub fn allocate_strata(sizes: &[usize], total: usize) -> Result<Vec<usize>> {
    let sum: usize = sizes.iter().sum();
    if total > sum {
        return Err(Error::InsufficientPool(format!("{total} requested from {sum} eligible pairs")));
    }
    if total == 0 {
        return Ok(vec![0; sizes.len()]);
    }
    // Exact integer quotas: size * total = floor * sum + remainder.
    let mut alloc: Vec<usize> = sizes.iter().map(|&s| s * total / sum).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(sizes[i] * total % sum));
    let missing = total - alloc.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        alloc[i] += 1;
    }
    Ok(alloc)
}

fn passes(state: &StoreState, id: &PairId, mode: ReviewerMode) -> Result<bool> {
    match mode {
        ReviewerMode::ExpertDirect => Ok(true),
        ReviewerMode::HumanGeq1 | ReviewerMode::HumanGeq2 => {
            let tier = state.tier(id)?;
            if tier == FilterTier::Pending {
                let n = state.scores.get(id).map_or(0, Vec::len);
                return Err(Error::InsufficientPool(format!("pair {id} has {n} of 2 judgments")));
            }
            Ok(if mode == ReviewerMode::HumanGeq1 {
                tier.passes_geq1()
            } else {
                tier.passes_geq2()
            })
        }
        ReviewerMode::Machine => state
            .machine_scores
            .get(id)
            .map(|s| s.label.is_suitable())
            .ok_or_else(|| Error::InsufficientPool(format!("pair {id} has no machine score"))),
    }
}

fn stratum(state: &StoreState, id: &PairId) -> (Origin, FilterTier) {
    let origin = state.pairs[id].origin.unwrap_or(Origin::Conditioned);
    (origin, state.tier(id).unwrap_or(FilterTier::Pending))
}

/// Filters `pool` through the condition's reviewer and assigns passing pairs
/// to the experiment's operators. Pairs already routed anywhere are never
/// assigned again.
pub fn route(state: &StoreState, experiment: &str, pool: &[PairId], config: &PipelineConfig) -> Result<RoutePlan> {
    let exp = state
        .experiments
        .get(experiment)
        .ok_or_else(|| Error::UnknownId(format!("experiment {experiment}")))?;
    let mut passed = Vec::new();
    let mut filtered_out = Vec::new();
    for id in pool {
        if passes(state, id, config.reviewer_mode)? {
            passed.push(id.clone());
        } else {
            filtered_out.push(id.clone());
        }
    }

    let eligible: Vec<&PairId> = passed
        .iter()
        .filter(|id| !state.routed_in.contains_key(*id) && state.pairs[*id].state.can_advance_to(PairState::ExpertQueue))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut chosen: Vec<PairId> = match config.session_size {
        None => eligible.into_iter().cloned().collect(),
        Some(k) => {
            let total = k * exp.operators.len();
            if total > eligible.len() {
                return Err(Error::InsufficientPool(format!(
                    "{} condition needs {total} pairs, {} eligible",
                    config.reviewer_mode,
                    eligible.len()
                )));
            }
            match config.sampling {
                Sampling::Uniform => index::sample(&mut rng, eligible.len(), total)
                    .into_iter()
                    .map(|i| eligible[i].clone())
                    .collect(),
                Sampling::Stratified => {
                    let mut strata: BTreeMap<(Origin, FilterTier), Vec<&PairId>> = BTreeMap::new();
                    for id in eligible {
                        strata.entry(stratum(state, id)).or_default().push(id);
                    }
                    let sizes: Vec<usize> = strata.values().map(Vec::len).collect();
                    let alloc = allocate_strata(&sizes, total)?;
                    let mut out = Vec::with_capacity(total);
                    for (members, n) in strata.values().zip(alloc) {
                        out.extend(index::sample(&mut rng, members.len(), n).into_iter().map(|i| members[i].clone()));
                    }
                    out
                }
            }
        }
    };
    chosen.shuffle(&mut rng);

    let assignments = match config.session_size {
        Some(k) => chosen
            .chunks(k.max(1))
            .zip(&exp.operators)
            .flat_map(|(chunk, op)| {
                chunk.iter().map(|id| Assignment {
                    pair_id: id.clone(),
                    operator: op.clone(),
                })
            })
            .collect(),
        None => chosen
            .into_iter()
            .zip(exp.operators.iter().cycle())
            .map(|(pair_id, op)| Assignment {
                pair_id,
                operator: op.clone(),
            })
            .collect(),
    };

    Ok(RoutePlan {
        experiment: experiment.to_owned(),
        config: config.clone(),
        passed,
        filtered_out,
        assignments,
    })
}

/// Seeded per-operator presentation order of the conditions.
pub fn condition_order(operators: &[String], modes: &[ReviewerMode], seed: u64) -> BTreeMap<String, Vec<ReviewerMode>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    operators
        .iter()
        .map(|op| {
            let mut order = modes.to_vec();
            order.shuffle(&mut rng);
            (op.clone(), order)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allocation_sums_and_stays_within_one() {
        let sizes = [276, 626, 1723, 145];
        let alloc = allocate_strata(&sizes, 100).unwrap();
        assert_eq!(alloc.iter().sum::<usize>(), 100);
        let sum: usize = sizes.iter().sum();
        for (s, a) in sizes.iter().zip(&alloc) {
            let exact = *s as f64 * 100.0 / sum as f64;
            assert!((*a as f64 - exact).abs() < 1.0, "{a} vs {exact}");
        }
    }

    #[test]
    fn allocation_edge_cases() {
        assert_eq!(allocate_strata(&[3, 3], 6).unwrap(), vec![3, 3]);
        assert_eq!(allocate_strata(&[1, 1, 1], 2).unwrap(), vec![1, 1, 0]);
        assert!(matches!(allocate_strata(&[1], 2), Err(Error::InsufficientPool(_))));
        assert_eq!(allocate_strata(&[], 0).unwrap(), Vec::<usize>::new());
    }

    #[test]
    fn condition_order_is_a_seeded_permutation() {
        let ops: Vec<String> = (0..5).map(|i| format!("op{i}")).collect();
        let a = condition_order(&ops, &ReviewerMode::ALL, 7);
        assert_eq!(a, condition_order(&ops, &ReviewerMode::ALL, 7));
        for order in a.values() {
            let mut sorted = order.clone();
            sorted.sort();
            assert_eq!(sorted, ReviewerMode::ALL.to_vec());
        }
    }
}
