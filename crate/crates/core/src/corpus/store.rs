//! Append-only event log with snapshots. The store state is a pure fold over
//! the log; every mutation of the pipeline is one [`PipelineEvent`].

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{HsCnPair, PairId, PairState, Source};
use crate::error::{Error, Result};
use crate::metrics::edit_rate;
use crate::orchestrator::{Action, ExpertDecision, PipelineConfig, ReviewerMode};
use crate::review::{aggregate, FilterTier, PairScore, ReviewScore};
use crate::text::NormalizationPolicy;

const EVENTS_FILE: &str = "events.jsonl";
const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub pair_id: PairId,
    pub operator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PipelineEvent {
    PairAdded {
        pair: HsCnPair,
    },
    ScoreSubmitted {
        score: ReviewScore,
    },
    MachineScored {
        score: PairScore,
    },
    ExperimentOpened {
        experiment: String,
        operators: Vec<String>,
        /// Per-operator order in which conditions are presented.
        condition_order: BTreeMap<String, Vec<ReviewerMode>>,
    },
    /// Reviewer filtering for one condition plus the expert assignments
    /// drawn from the pairs that passed.
    ConditionRouted {
        experiment: String,
        config: PipelineConfig,
        passed: Vec<PairId>,
        filtered_out: Vec<PairId>,
        assignments: Vec<Assignment>,
    },
    DecisionRecorded {
        decision: ExpertDecision,
    },
    ExperimentClosed {
        experiment: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
    pub event: PipelineEvent,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConditionKey {
    pub experiment: String,
    pub mode: ReviewerMode,
}

impl std::fmt::Display for ConditionKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.experiment, self.mode)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub decision: ExpertDecision,
    pub edit_rate: Option<f64>,
    pub replacement: Option<PairId>,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionState {
    pub config: PipelineConfig,
    pub passed: BTreeSet<PairId>,
    pub filtered_out: BTreeSet<PairId>,
    /// Routed pairs and the operator each one was assigned to.
    pub assignments: BTreeMap<PairId, String>,
    pub decisions: BTreeMap<PairId, DecisionRecord>,
}

impl ConditionState {
    pub fn considered(&self) -> usize {
        self.passed.len() + self.filtered_out.len()
    }

    pub fn accepted(&self) -> usize {
        self.decisions
            .values()
            .filter(|d| d.decision.action != Action::Discard)
            .count()
    }

    pub fn discarded(&self) -> usize {
        self.decisions.len() - self.accepted()
    }

    pub fn pending(&self) -> usize {
        self.assignments.len() - self.decisions.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub id: String,
    pub operators: Vec<String>,
    pub condition_order: BTreeMap<String, Vec<ReviewerMode>>,
    pub conditions: BTreeMap<ReviewerMode, ConditionState>,
    pub closed: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StoreState {
    pub last_seq: u64,
    pub pairs: BTreeMap<PairId, HsCnPair>,
    pub scores: BTreeMap<PairId, Vec<ReviewScore>>,
    pub machine_scores: BTreeMap<PairId, PairScore>,
    pub experiments: BTreeMap<String, Experiment>,
    /// Which condition each routed pair belongs to.
    pub routed_in: BTreeMap<PairId, ConditionKey>,
    pub idempotency: BTreeMap<String, u64>,
}

fn unknown(id: &PairId) -> Error {
    Error::UnknownId(id.to_string())
}

impl StoreState {
    pub fn pair(&self, id: &PairId) -> Result<&HsCnPair> {
        self.pairs.get(id).ok_or_else(|| unknown(id))
    }

    pub fn tier(&self, id: &PairId) -> Result<FilterTier> {
        self.pair(id)?;
        aggregate(self.scores.get(id).map(Vec::as_slice).unwrap_or_default())
    }

    pub fn condition(&self, key: &ConditionKey) -> Option<&ConditionState> {
        self.experiments.get(&key.experiment)?.conditions.get(&key.mode)
    }

    /// Pairs that came out of the author (the pool the reviewers filter).
    pub fn generated(&self) -> impl Iterator<Item = &HsCnPair> {
        self.pairs.values().filter(|p| p.source == Source::Generated)
    }

    /// Accepted pairs with post-edits substituted for the originals.
    pub fn accepted(&self) -> impl Iterator<Item = &HsCnPair> {
        let replaced: BTreeSet<&PairId> = self.pairs.values().filter_map(|p| p.replaces.as_ref()).collect();
        self.pairs
            .values()
            .filter(move |p| p.state == PairState::Accepted && !replaced.contains(&p.id))
    }

    /// Canonical serialized form; identical logs yield identical bytes.
    pub fn export(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    fn open_experiment(&self, id: &str) -> Result<&Experiment> {
        let exp = self
            .experiments
            .get(id)
            .ok_or_else(|| Error::UnknownId(format!("experiment {id}")))?;
        if exp.closed {
            return Err(Error::ExperimentClosed(id.to_owned()));
        }
        Ok(exp)
    }

    /// Validates `event` against the current state without changing it.
    pub fn check(&self, event: &PipelineEvent) -> Result<()> {
        match event {
            PipelineEvent::PairAdded { pair } => {
                pair.validate()?;
                if self.pairs.contains_key(&pair.id) {
                    return Err(Error::InvalidConfig(format!("duplicate pair id {}", pair.id)));
                }
                if let Some(orig) = &pair.replaces {
                    self.pair(orig)?;
                }
            }
            PipelineEvent::ScoreSubmitted { score } => {
                let pair = self.pair(&score.pair_id)?;
                if !matches!(
                    pair.state,
                    PairState::Candidate | PairState::HumanReview | PairState::MachineReview
                ) {
                    return Err(Error::WrongState {
                        id: pair.id.to_string(),
                        state: pair.state.as_str().into(),
                        expected: "candidate or review".into(),
                    });
                }
                let existing = self.scores.get(&score.pair_id).map(Vec::as_slice).unwrap_or_default();
                if existing.iter().any(|s| s.annotator_id == score.annotator_id) {
                    return Err(Error::DuplicateAnnotator {
                        pair: score.pair_id.to_string(),
                        annotator: score.annotator_id.clone(),
                    });
                }
                if existing.len() >= 2 {
                    return Err(Error::TooManyJudgments(score.pair_id.to_string()));
                }
            }
            PipelineEvent::MachineScored { score } => {
                let pair = self.pair(&score.pair_id)?;
                if !pair.state.can_advance_to(PairState::MachineReview) && pair.state != PairState::MachineReview {
                    return Err(Error::WrongState {
                        id: pair.id.to_string(),
                        state: pair.state.as_str().into(),
                        expected: "candidate or review".into(),
                    });
                }
            }
            PipelineEvent::ExperimentOpened { experiment, operators, .. } => {
                if self.experiments.contains_key(experiment) {
                    return Err(Error::InvalidConfig(format!("experiment {experiment} already exists")));
                }
                if operators.is_empty() {
                    return Err(Error::InvalidConfig("experiment needs at least one operator".into()));
                }
            }
            PipelineEvent::ConditionRouted {
                experiment,
                config,
                passed,
                filtered_out,
                assignments,
            } => {
                let exp = self.open_experiment(experiment)?;
                if exp.conditions.contains_key(&config.reviewer_mode) {
                    return Err(Error::InvalidConfig(format!(
                        "condition {} already routed in {experiment}",
                        config.reviewer_mode
                    )));
                }
                let passed_set: BTreeSet<&PairId> = passed.iter().collect();
                let mut seen = BTreeSet::new();
                for id in passed.iter().chain(filtered_out) {
                    self.pair(id)?;
                    if !seen.insert(id) {
                        return Err(Error::InvalidConfig(format!("pair {id} listed twice")));
                    }
                }
                let mut assigned = BTreeSet::new();
                for a in assignments {
                    if !passed_set.contains(&a.pair_id) {
                        return Err(Error::InvalidConfig(format!("assigned pair {} did not pass", a.pair_id)));
                    }
                    if !exp.operators.contains(&a.operator) {
                        return Err(Error::UnknownId(format!("operator {}", a.operator)));
                    }
                    if !assigned.insert(&a.pair_id) || self.routed_in.contains_key(&a.pair_id) {
                        return Err(Error::InvalidConfig(format!("pair {} routed twice", a.pair_id)));
                    }
                    let pair = self.pair(&a.pair_id)?;
                    if !pair.state.can_advance_to(PairState::ExpertQueue) {
                        return Err(Error::InvalidTransition {
                            id: pair.id.to_string(),
                            from: pair.state.as_str().into(),
                            to: PairState::ExpertQueue.as_str().into(),
                        });
                    }
                }
            }
            PipelineEvent::DecisionRecorded { decision } => {
                let pair = self.pair(&decision.pair_id)?;
                let key = self.routed_in.get(&decision.pair_id).ok_or_else(|| Error::WrongState {
                    id: pair.id.to_string(),
                    state: pair.state.as_str().into(),
                    expected: PairState::ExpertQueue.as_str().into(),
                })?;
                self.open_experiment(&key.experiment)?;
                if pair.state != PairState::ExpertQueue {
                    return Err(Error::WrongState {
                        id: pair.id.to_string(),
                        state: pair.state.as_str().into(),
                        expected: PairState::ExpertQueue.as_str().into(),
                    });
                }
                let cond = self.condition(key).expect("routed pairs have a condition");
                if cond.assignments.get(&decision.pair_id) != Some(&decision.operator_id) {
                    return Err(Error::InvalidConfig(format!(
                        "pair {} is not assigned to operator {}",
                        decision.pair_id, decision.operator_id
                    )));
                }
                if decision.action == Action::Edit {
                    let policy = NormalizationPolicy::default();
                    let edited = decision.edited_cn.as_deref().map(|t| policy.normalize(t)).unwrap_or_default();
                    if edited.is_empty() || edited == policy.normalize(&pair.counter_narrative) {
                        return Err(Error::EmptyEdit);
                    }
                }
            }
            PipelineEvent::ExperimentClosed { experiment } => {
                self.open_experiment(experiment)?;
            }
        }
        Ok(())
    }

    /// Checks and applies one record. On error the state is unchanged.
    pub fn apply(&mut self, record: &EventRecord) -> Result<()> {
        if record.seq != self.last_seq + 1 {
            return Err(Error::CorruptRecord {
                line: record.seq as usize,
                reason: format!("expected seq {}, found {}", self.last_seq + 1, record.seq),
            });
        }
        self.check(&record.event)?;
        match &record.event {
            PipelineEvent::PairAdded { pair } => {
                self.pairs.insert(pair.id.clone(), pair.clone());
            }
            PipelineEvent::ScoreSubmitted { score } => {
                self.scores.entry(score.pair_id.clone()).or_default().push(score.clone());
                let pair = self.pairs.get_mut(&score.pair_id).expect("checked");
                pair.state = PairState::HumanReview;
            }
            PipelineEvent::MachineScored { score } => {
                self.machine_scores.insert(score.pair_id.clone(), score.clone());
                let pair = self.pairs.get_mut(&score.pair_id).expect("checked");
                pair.state = PairState::MachineReview;
            }
            PipelineEvent::ExperimentOpened {
                experiment,
                operators,
                condition_order,
            } => {
                self.experiments.insert(
                    experiment.clone(),
                    Experiment {
                        id: experiment.clone(),
                        operators: operators.clone(),
                        condition_order: condition_order.clone(),
                        conditions: BTreeMap::new(),
                        closed: false,
                    },
                );
            }
            PipelineEvent::ConditionRouted {
                experiment,
                config,
                passed,
                filtered_out,
                assignments,
            } => {
                let key = ConditionKey {
                    experiment: experiment.clone(),
                    mode: config.reviewer_mode,
                };
                for a in assignments {
                    self.pairs.get_mut(&a.pair_id).expect("checked").state = PairState::ExpertQueue;
                    self.routed_in.insert(a.pair_id.clone(), key.clone());
                }
                let state = ConditionState {
                    config: config.clone(),
                    passed: passed.iter().cloned().collect(),
                    filtered_out: filtered_out.iter().cloned().collect(),
                    assignments: assignments
                        .iter()
                        .map(|a| (a.pair_id.clone(), a.operator.clone()))
                        .collect(),
                    decisions: BTreeMap::new(),
                };
                self.experiments
                    .get_mut(experiment)
                    .expect("checked")
                    .conditions
                    .insert(config.reviewer_mode, state);
            }
            PipelineEvent::DecisionRecorded { decision } => {
                let key = self.routed_in[&decision.pair_id].clone();
                let original = self.pairs.get_mut(&decision.pair_id).expect("checked");
                let mut record_out = DecisionRecord {
                    decision: decision.clone(),
                    edit_rate: None,
                    replacement: None,
                    seq: record.seq,
                };
                match decision.action {
                    Action::Validate => {
                        original.state = PairState::Accepted;
                        record_out.decision.edited_cn = None;
                        record_out.edit_rate = Some(0.0);
                    }
                    Action::Discard => {
                        original.state = PairState::Discarded;
                        record_out.decision.edited_cn = None;
                    }
                    Action::Edit => {
                        original.state = PairState::Accepted;
                        let edited = decision.edited_cn.clone().expect("checked");
                        let rate = edit_rate(&original.counter_narrative, &edited, &NormalizationPolicy::default())?;
                        let replacement = HsCnPair {
                            id: PairId::new(format!("{}+pe", original.id)),
                            hate_speech: original.hate_speech.clone(),
                            counter_narrative: edited,
                            source: Source::PostEdited,
                            cn_type: None,
                            state: PairState::Accepted,
                            created_at: record.at,
                            replaces: Some(original.id.clone()),
                            origin: original.origin,
                        };
                        record_out.edit_rate = Some(rate);
                        record_out.replacement = Some(replacement.id.clone());
                        self.pairs.insert(replacement.id.clone(), replacement);
                    }
                }
                self.experiments
                    .get_mut(&key.experiment)
                    .and_then(|e| e.conditions.get_mut(&key.mode))
                    .expect("checked")
                    .decisions
                    .insert(decision.pair_id.clone(), record_out);
            }
            PipelineEvent::ExperimentClosed { experiment } => {
                self.experiments.get_mut(experiment).expect("checked").closed = true;
            }
        }
        if let Some(key) = &record.idempotency_key {
            self.idempotency.insert(key.clone(), record.seq);
        }
        self.last_seq = record.seq;
        Ok(())
    }

    pub fn replay<'a>(records: impl IntoIterator<Item = &'a EventRecord>) -> Result<Self> {
        let mut state = Self::default();
        for r in records {
            state.apply(r)?;
        }
        Ok(state)
    }

    /// Conservation per condition: considered = passed + filtered_out,
    /// routed = accepted + discarded + pending, and every routed pair passed.
    pub fn check_conservation(&self) -> std::result::Result<(), String> {
        for exp in self.experiments.values() {
            for (mode, c) in &exp.conditions {
                if c.passed.intersection(&c.filtered_out).next().is_some() {
                    return Err(format!("{}/{mode}: pair both passed and filtered", exp.id));
                }
                if !c.assignments.keys().all(|id| c.passed.contains(id)) {
                    return Err(format!("{}/{mode}: routed pair did not pass", exp.id));
                }
                let (mut acc, mut dis, mut pend) = (0, 0, 0);
                for id in c.assignments.keys() {
                    match self.pairs[id].state {
                        PairState::Accepted => acc += 1,
                        PairState::Discarded => dis += 1,
                        PairState::ExpertQueue => pend += 1,
                        other => return Err(format!("{}/{mode}: routed pair {id} in {}", exp.id, other.as_str())),
                    }
                }
                if acc != c.accepted() || dis != c.discarded() || pend != c.pending() {
                    return Err(format!("{}/{mode}: decision tallies disagree with pair states", exp.id));
                }
                if c.assignments.len() != acc + dis + pend {
                    return Err(format!("{}/{mode}: routed != accepted + discarded + pending", exp.id));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    last_seq: u64,
    state: StoreState,
}

/// The single-writer event log. Optionally backed by a directory holding
/// `events.jsonl` and `snapshot.json`.
#[derive(Debug)]
pub struct EventLog {
    dir: Option<PathBuf>,
    file: Option<File>,
    records: Vec<EventRecord>,
    state: StoreState,
    /// Write a snapshot every this many appended events.
    pub snapshot_every: Option<u64>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            file: None,
            records: Vec::new(),
            state: StoreState::default(),
            snapshot_every: None,
        }
    }

    /// Opens (or creates) a log directory: loads the latest snapshot, then
    /// replays the events recorded after it.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir)?;
        let events_path = dir.join(EVENTS_FILE);
        let mut records = Vec::new();
        if events_path.exists() {
            for (i, line) in BufReader::new(File::open(&events_path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                records.push(serde_json::from_str::<EventRecord>(&line).map_err(|e| Error::CorruptRecord {
                    line: i + 1,
                    reason: e.to_string(),
                })?);
            }
        }

        let snapshot_path = dir.join(SNAPSHOT_FILE);
        let mut state = if snapshot_path.exists() {
            let snap: Snapshot = serde_json::from_slice(&std::fs::read(&snapshot_path)?)?;
            if snap.last_seq > records.len() as u64 {
                return Err(Error::CorruptRecord {
                    line: 0,
                    reason: format!("snapshot at seq {} is ahead of the log ({} events)", snap.last_seq, records.len()),
                });
            }
            snap.state
        } else {
            StoreState::default()
        };
        for r in records.iter().skip(state.last_seq as usize) {
            state.apply(r)?;
        }

        let file = OpenOptions::new().create(true).append(true).open(&events_path)?;
        Ok(Self {
            dir: Some(dir),
            file: Some(file),
            records,
            state,
            snapshot_every: Some(1000),
        })
    }

    pub fn state(&self) -> &StoreState {
        &self.state
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    /// Full store state as of the last appended event.
    pub fn load_snapshot(&self) -> StoreState {
        self.state.clone()
    }

    pub fn persist(&mut self, event: PipelineEvent, idempotency_key: Option<String>) -> Result<u64> {
        self.persist_at(event, idempotency_key, Utc::now())
    }

    /// Appends an event and returns its sequence number. An event carrying an
    /// idempotency key that was already recorded is not appended again; the
    /// original sequence number is returned.
    pub fn persist_at(
        &mut self,
        event: PipelineEvent,
        idempotency_key: Option<String>,
        at: DateTime<Utc>,
    ) -> Result<u64> {
        if let Some(seq) = idempotency_key.as_ref().and_then(|k| self.state.idempotency.get(k)) {
            return Ok(*seq);
        }
        self.state.check(&event)?;
        let record = EventRecord {
            seq: self.state.last_seq + 1,
            at,
            idempotency_key,
            event,
        };
        if let Some(file) = &mut self.file {
            let mut line = serde_json::to_vec(&record)?;
            line.push(b'\n');
            file.write_all(&line)?;
            file.flush()?;
        }
        self.state.apply(&record)?;
        self.records.push(record);
        if let Some(every) = self.snapshot_every {
            if self.dir.is_some() && self.state.last_seq % every == 0 {
                self.write_snapshot()?;
            }
        }
        Ok(self.state.last_seq)
    }

    pub fn write_snapshot(&self) -> Result<()> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let snap = Snapshot {
            last_seq: self.state.last_seq,
            state: self.state.clone(),
        };
        std::fs::write(&tmp, serde_json::to_vec(&snap)?)?;
        std::fs::rename(tmp, dir.join(SNAPSHOT_FILE))?;
        Ok(())
    }
}
