use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Action, ReviewerMode};
use crate::corpus::{ConditionKey, Source, StoreState};
use crate::error::{Error, Result};
use crate::metrics::{repetition_rate, NoveltyIndex, NoveltyVariant, RRConfig};
use crate::review::{FilterTier, TierCounts};
use crate::text::NormalizationPolicy;

/// Cost model of crowd filtering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrowdCost {
    pub seconds_per_judgment: f64,
    pub judgments_per_pair: f64,
}

impl Default for CrowdCost {
    fn default() -> Self {
        Self {
            seconds_per_judgment: 35.0,
            judgments_per_pair: 2.0,
        }
    }
}

/// Crowd seconds spent per pair that survives a filter passing `rate` of
/// the pool. `None` when nothing passes.
pub fn crowd_time_per_pair(rate: f64, cost: &CrowdCost) -> Option<f64> {
    (rate > 0.0).then(|| cost.judgments_per_pair * cost.seconds_per_judgment / rate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub cost: CrowdCost,
    pub rr: RRConfig,
    pub novelty_variant: NoveltyVariant,
    pub policy: NormalizationPolicy,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            cost: CrowdCost::default(),
            rr: RRConfig::default(),
            novelty_variant: NoveltyVariant::Max,
            policy: NormalizationPolicy::default(),
        }
    }
}

/// Effort and quality of one condition of an expert experiment.
/// Percentages are in [0, 100]; times are seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffortReport {
    pub experiment: String,
    pub condition: ReviewerMode,
    /// Author pairs the reviewer looked at.
    pub generated: usize,
    pub passed: usize,
    pub filtered_out: usize,
    /// Pairs assigned to operators.
    pub routed: usize,
    pub accepted: usize,
    pub edited: usize,
    pub discarded: usize,
    pub pending: usize,
    pub ngo_time_per_pair: Option<f64>,
    /// Pass rate of the crowd tier behind this condition, if any.
    pub tier_rate: Option<f64>,
    pub crowd_time_per_pair: Option<f64>,
    pub rr: Option<f64>,
    pub novelty: Option<f64>,
    pub novelty_variant: NoveltyVariant,
    pub pairs_selec: f64,
    pub pairs_final: f64,
    pub mean_hter: Option<f64>,
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Builds the report for one condition purely from store state, so a
/// replayed log yields the same report.
pub fn effort_report(state: &StoreState, key: &ConditionKey, opts: &ReportOptions) -> Result<EffortReport> {
    let cond = state.condition(key).ok_or_else(|| Error::NoEvents(key.to_string()))?;

    let tier_rate = match key.mode {
        ReviewerMode::HumanGeq1 | ReviewerMode::HumanGeq2 => {
            let counts = TierCounts::from_tiers(
                cond.passed
                    .iter()
                    .chain(&cond.filtered_out)
                    .map(|id| state.tier(id))
                    .collect::<Result<Vec<FilterTier>>>()?,
            );
            let selected = if key.mode == ReviewerMode::HumanGeq1 {
                counts.geq1()
            } else {
                counts.geq2
            };
            Some(selected as f64 / counts.annotated().max(1) as f64)
        }
        _ => None,
    };

    let mut times = Vec::new();
    let mut hters = Vec::new();
    let mut accepted_cns = Vec::new();
    let mut edited = 0;
    for (id, record) in &cond.decisions {
        times.push(record.decision.elapsed_ms as f64 / 1000.0);
        match record.decision.action {
            Action::Discard => continue,
            Action::Edit => {
                edited += 1;
                hters.extend(record.edit_rate);
            }
            Action::Validate => {}
        }
        let final_id = record.replacement.as_ref().unwrap_or(id);
        accepted_cns.push(state.pair(final_id)?.counter_narrative.as_str());
    }

    let rr = if accepted_cns.is_empty() {
        None
    } else {
        repetition_rate(&accepted_cns, &opts.rr, &opts.policy).ok()
    };
    let training: Vec<&str> = state
        .pairs
        .values()
        .filter(|p| p.source == Source::SeedDataset)
        .map(|p| p.counter_narrative.as_str())
        .collect();
    let novelty = match NoveltyIndex::new(&training, opts.policy) {
        Ok(index) => index.corpus_novelty(&accepted_cns, opts.novelty_variant),
        Err(_) => None,
    };

    Ok(EffortReport {
        experiment: key.experiment.clone(),
        condition: key.mode,
        generated: cond.considered(),
        passed: cond.passed.len(),
        filtered_out: cond.filtered_out.len(),
        routed: cond.assignments.len(),
        accepted: cond.accepted(),
        edited,
        discarded: cond.discarded(),
        pending: cond.pending(),
        ngo_time_per_pair: mean(&times),
        tier_rate,
        crowd_time_per_pair: tier_rate.and_then(|r| crowd_time_per_pair(r, &opts.cost)),
        rr,
        novelty,
        novelty_variant: opts.novelty_variant,
        pairs_selec: pct(cond.passed.len(), cond.considered()),
        pairs_final: pct(cond.accepted(), cond.assignments.len()),
        mean_hter: mean(&hters),
    })
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{v:.digits$}"))
}

impl fmt::Display for EffortReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}/{}", self.experiment, self.condition)?;
        writeln!(f, "  NGO time/pair    {} s", opt(self.ngo_time_per_pair, 1))?;
        writeln!(f, "  crowd time/pair  {} s", opt(self.crowd_time_per_pair, 1))?;
        writeln!(f, "  RR               {}", opt(self.rr, 2))?;
        writeln!(f, "  novelty          {} ({:?})", opt(self.novelty, 3), self.novelty_variant)?;
        writeln!(
            f,
            "  pairs_selec      {:.1}% ({} of {})",
            self.pairs_selec, self.passed, self.generated
        )?;
        writeln!(
            f,
            "  pairs_final      {:.1}% ({} of {}, {} pending)",
            self.pairs_final, self.accepted, self.routed, self.pending
        )?;
        write!(f, "  mean HTER        {} over {} edits", opt(self.mean_hter, 3), self.edited)
    }
}
