//! Pair data model, marker serialization, dataset files and the event store.

mod dataset;
mod markers;
mod store;

pub use dataset::{read_dataset, write_dataset, DatasetRecord};
pub use markers::{parse_stream, serialize_pair, Block, Fragment, FragmentReason, MarkerFormat, ParsedStream};
pub use store::{
    Assignment, ConditionKey, ConditionState, DecisionRecord, EventLog, EventRecord, Experiment, PipelineEvent,
    StoreState,
};

use std::collections::HashSet;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::NormalizationPolicy;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PairId(pub String);

impl PairId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn random() -> Self {
        Self(uuid::Uuid::new_v4().to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PairId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PairId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    SeedDataset,
    Generated,
    PostEdited,
}

/// How a generated pair came out of the author.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// The counter-narrative produced for the HS the author was conditioned on.
    Conditioned,
    /// A complete HS-CN block found in the over-generated text.
    Harvested,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CnType {
    Hostile,
    Denouncing,
    DenouncingPlusOther,
    Fact,
    Other,
}

impl CnType {
    pub const ALL: [CnType; 5] = [
        CnType::Hostile,
        CnType::Denouncing,
        CnType::DenouncingPlusOther,
        CnType::Fact,
        CnType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CnType::Hostile => "hostile",
            CnType::Denouncing => "denouncing",
            CnType::DenouncingPlusOther => "denouncing_plus_other",
            CnType::Fact => "fact",
            CnType::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairState {
    Candidate,
    HumanReview,
    MachineReview,
    ExpertQueue,
    Accepted,
    Discarded,
}

impl PairState {
    fn rank(self) -> u8 {
        match self {
            PairState::Candidate => 0,
            PairState::HumanReview | PairState::MachineReview => 1,
            PairState::ExpertQueue => 2,
            PairState::Accepted | PairState::Discarded => 3,
        }
    }

    /// Forward-only along candidate -> review -> expert_queue -> terminal.
    /// Moving between the two review states is allowed (a pair may be scored
    /// by humans and by the machine reviewer).
    pub fn can_advance_to(self, next: PairState) -> bool {
        if self.rank() == 3 {
            return false;
        }
        next.rank() > self.rank() || (self.rank() == 1 && next.rank() == 1)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PairState::Candidate => "candidate",
            PairState::HumanReview => "human_review",
            PairState::MachineReview => "machine_review",
            PairState::ExpertQueue => "expert_queue",
            PairState::Accepted => "accepted",
            PairState::Discarded => "discarded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HsCnPair {
    pub id: PairId,
    #[serde(rename = "hs")]
    pub hate_speech: String,
    #[serde(rename = "cn")]
    pub counter_narrative: String,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cn_type: Option<CnType>,
    pub state: PairState,
    pub created_at: DateTime<Utc>,
    /// Id of the generated pair a post-edited pair replaces.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replaces: Option<PairId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Origin>,
}

impl HsCnPair {
    pub fn new(
        id: PairId,
        hate_speech: impl Into<String>,
        counter_narrative: impl Into<String>,
        source: Source,
    ) -> Result<Self> {
        let pair = Self {
            id,
            hate_speech: hate_speech.into(),
            counter_narrative: counter_narrative.into(),
            source,
            cn_type: None,
            state: PairState::Candidate,
            created_at: Utc::now(),
            replaces: None,
            origin: None,
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn with_origin(mut self, origin: Origin) -> Self {
        self.origin = Some(origin);
        self
    }

    pub fn with_cn_type(mut self, cn_type: CnType) -> Self {
        self.cn_type = Some(cn_type);
        self
    }

    pub fn with_created_at(mut self, at: DateTime<Utc>) -> Self {
        self.created_at = at;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let policy = NormalizationPolicy::default();
        if policy.normalize(&self.hate_speech).is_empty() {
            return Err(Error::EmptyField("hate_speech"));
        }
        if policy.normalize(&self.counter_narrative).is_empty() {
            return Err(Error::EmptyField("counter_narrative"));
        }
        if self.source == Source::PostEdited && self.replaces.is_none() {
            return Err(Error::InvalidConfig(format!(
                "post-edited pair {} does not record the pair it replaces",
                self.id
            )));
        }
        Ok(())
    }

    pub fn advance(&mut self, next: PairState) -> Result<()> {
        if self.state == next {
            return Ok(());
        }
        if !self.state.can_advance_to(next) {
            return Err(Error::InvalidTransition {
                id: self.id.to_string(),
                from: self.state.as_str().into(),
                to: next.as_str().into(),
            });
        }
        self.state = next;
        Ok(())
    }
}

/// Drops pairs whose counter-narrative equals (under `policy`) one seen
/// earlier. First occurrence wins; order is preserved.
pub fn dedup(pairs: &[HsCnPair], policy: &NormalizationPolicy) -> Vec<HsCnPair> {
    let mut seen = HashSet::new();
    pairs
        .iter()
        .filter(|p| seen.insert(policy.normalize(&p.counter_narrative)))
        .cloned()
        .collect()
}

/// Same as [`dedup`] over bare texts.
pub fn dedup_texts<S: AsRef<str>>(texts: &[S], policy: &NormalizationPolicy) -> Vec<String> {
    let mut seen = HashSet::new();
    texts
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| seen.insert(policy.normalize(t)))
        .map(str::to_owned)
        .collect()
}
