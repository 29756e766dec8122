use std::path::Path;

use serde::{Deserialize, Serialize};

use super::report::{effort_report, EffortReport, ReportOptions};
use super::routing::{condition_order, route, RoutePlan};
use super::{ExpertDecision, PipelineConfig, ReviewerMode};
use crate::corpus::{
    ConditionKey, DatasetRecord, EventLog, HsCnPair, PairId, PairState, PipelineEvent, Source, StoreState,
};
use crate::error::{Error, Result};
use crate::review::{PairScore, PairScorer, ReviewScore};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConditionItem {
    pub pair_id: PairId,
    pub experiment: String,
    pub condition: ReviewerMode,
}

/// Typed operations over the event log. Every mutation appends one event.
#[derive(Debug)]
pub struct Pipeline {
    log: EventLog,
}

impl Pipeline {
    pub fn new(log: EventLog) -> Self {
        Self { log }
    }

    pub fn in_memory() -> Self {
        Self::new(EventLog::in_memory())
    }

    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::new(EventLog::open(dir)?))
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn log_mut(&mut self) -> &mut EventLog {
        &mut self.log
    }

    pub fn state(&self) -> &StoreState {
        self.log.state()
    }

    pub fn add_pair(&mut self, pair: HsCnPair, key: Option<String>) -> Result<u64> {
        self.log.persist(PipelineEvent::PairAdded { pair }, key)
    }

    pub fn submit_score(&mut self, score: ReviewScore, key: Option<String>) -> Result<u64> {
        self.log.persist(PipelineEvent::ScoreSubmitted { score }, key)
    }

    pub fn record_machine_score(&mut self, score: PairScore) -> Result<u64> {
        self.log.persist(PipelineEvent::MachineScored { score }, None)
    }

    /// Scores the given pairs with `scorer` and records each result.
    pub fn machine_review<S: PairScorer + ?Sized>(&mut self, scorer: &S, ids: &[PairId]) -> Result<usize> {
        for id in ids {
            let pair = self.state().pair(id)?;
            let score = scorer.score_texts(id.clone(), &pair.hate_speech, &pair.counter_narrative)?;
            self.record_machine_score(score)?;
        }
        Ok(ids.len())
    }

    pub fn open_experiment(&mut self, experiment: &str, operators: Vec<String>, rng_seed: u64) -> Result<u64> {
        let order = condition_order(&operators, &ReviewerMode::ALL, rng_seed);
        self.log.persist(
            PipelineEvent::ExperimentOpened {
                experiment: experiment.to_owned(),
                operators,
                condition_order: order,
            },
            None,
        )
    }

    /// Generated pairs: the pool every condition filters.
    pub fn generated_pool(&self) -> Vec<PairId> {
        self.state().generated().map(|p| p.id.clone()).collect()
    }

    /// Routes one condition over `pool` (all generated pairs if `None`).
    pub fn route_condition(
        &mut self,
        experiment: &str,
        config: &PipelineConfig,
        pool: Option<&[PairId]>,
    ) -> Result<RoutePlan> {
        let default_pool;
        let pool = match pool {
            Some(p) => p,
            None => {
                default_pool = self.generated_pool();
                &default_pool
            }
        };
        let plan = route(self.state(), experiment, pool, config)?;
        self.log.persist(plan.clone().into_event(), None)?;
        Ok(plan)
    }

    pub fn record_decision(&mut self, decision: ExpertDecision, key: Option<String>) -> Result<u64> {
        self.log.persist(PipelineEvent::DecisionRecorded { decision }, key)
    }

    pub fn close_experiment(&mut self, experiment: &str) -> Result<u64> {
        self.log.persist(
            PipelineEvent::ExperimentClosed {
                experiment: experiment.to_owned(),
            },
            None,
        )
    }

    pub fn effort_report(&self, experiment: &str, mode: ReviewerMode, opts: &ReportOptions) -> Result<EffortReport> {
        effort_report(
            self.state(),
            &ConditionKey {
                experiment: experiment.to_owned(),
                mode,
            },
            opts,
        )
    }

    /// The experiment a condition report refers to when none is named: the
    /// only one that routed `mode`.
    pub fn resolve_experiment(&self, mode: ReviewerMode) -> Result<String> {
        let mut ids = self
            .state()
            .experiments
            .values()
            .filter(|e| e.conditions.contains_key(&mode))
            .map(|e| e.id.clone());
        match (ids.next(), ids.next()) {
            (Some(id), None) => Ok(id),
            (None, _) => Err(Error::NoEvents(mode.to_string())),
            (Some(_), Some(_)) => Err(Error::InvalidConfig(format!(
                "several experiments routed {mode}; name one"
            ))),
        }
    }

    /// Accepted pairs, with post-edits in place of their originals.
    pub fn export_accepted(&self) -> Vec<DatasetRecord> {
        self.state().accepted().map(DatasetRecord::from).collect()
    }

    /// First generated pair, in id order, that `annotator` has not scored and
    /// that still has a free judgment slot. `reserved` counts slots held by
    /// other reviewers' open claims.
    pub fn next_for_annotator(&self, annotator: &str, reserved: impl Fn(&PairId) -> usize) -> Option<PairId> {
        let state = self.state();
        state
            .generated()
            .filter(|p| {
                matches!(
                    p.state,
                    PairState::Candidate | PairState::HumanReview | PairState::MachineReview
                )
            })
            .find(|p| {
                let scores = state.scores.get(&p.id).map(Vec::as_slice).unwrap_or_default();
                !scores.iter().any(|s| s.annotator_id == annotator) && scores.len() + reserved(&p.id) < 2
            })
            .map(|p| p.id.clone())
    }

    /// Next undecided pair assigned to `operator`, following the operator's
    /// condition order within each open experiment.
    pub fn next_for_operator(&self, operator: &str) -> Option<ConditionItem> {
        for exp in self.state().experiments.values().filter(|e| !e.closed) {
            let Some(order) = exp.condition_order.get(operator) else {
                continue;
            };
            for mode in order {
                let Some(cond) = exp.conditions.get(mode) else {
                    continue;
                };
                let pending = cond
                    .assignments
                    .iter()
                    .find(|(id, op)| op.as_str() == operator && !cond.decisions.contains_key(*id));
                if let Some((id, _)) = pending {
                    return Some(ConditionItem {
                        pair_id: id.clone(),
                        experiment: exp.id.clone(),
                        condition: *mode,
                    });
                }
            }
        }
        None
    }

    /// Seed pairs loaded for novelty and classifier construction.
    pub fn seed_pairs(&self) -> impl Iterator<Item = &HsCnPair> {
        self.state().pairs.values().filter(|p| p.source == Source::SeedDataset)
    }
}
