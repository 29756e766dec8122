//! End-to-end pipeline: candidate pools, reviewer routing, expert decisions
//! and effort reports, plus the HTTP service that fronts them.

mod pipeline;
mod report;
mod routing;
pub mod service;

pub use pipeline::{ConditionItem, Pipeline};
pub use report::{crowd_time_per_pair, effort_report, CrowdCost, EffortReport, ReportOptions};
pub use routing::{allocate_strata, condition_order, route, RoutePlan};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::PairId;
use crate::error::Error;

/// Which reviewer sits between the author and the expert.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewerMode {
    ExpertDirect,
    HumanGeq1,
    HumanGeq2,
    Machine,
}

impl ReviewerMode {
    pub const ALL: [ReviewerMode; 4] = [
        ReviewerMode::ExpertDirect,
        ReviewerMode::HumanGeq1,
        ReviewerMode::HumanGeq2,
        ReviewerMode::Machine,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReviewerMode::ExpertDirect => "expert_direct",
            ReviewerMode::HumanGeq1 => "human_geq1",
            ReviewerMode::HumanGeq2 => "human_geq2",
            ReviewerMode::Machine => "machine",
        }
    }
}

impl fmt::Display for ReviewerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReviewerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown reviewer mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    #[default]
    Stratified,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub reviewer_mode: ReviewerMode,
    #[serde(default)]
    pub sampling: Sampling,
    /// Pairs per operator; `None` routes every passing pair, dealt
    /// round-robin to the operators.
    #[serde(default = "default_session_size")]
    pub session_size: Option<usize>,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_session_size() -> Option<usize> {
    Some(20)
}

impl PipelineConfig {
    pub fn new(reviewer_mode: ReviewerMode) -> Self {
        Self {
            reviewer_mode,
            sampling: Sampling::Stratified,
            session_size: default_session_size(),
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    /// The CN is a perfect answer as is.
    Validate,
    /// A good answer after some editing.
    Edit,
    /// Irrelevant or in need of a full rewrite.
    Discard,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertDecision {
    pub pair_id: PairId,
    pub operator_id: String,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edited_cn: Option<String>,
    pub elapsed_ms: u64,
}
