use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the pipeline can surface. Each variant maps to a stable
/// machine-readable code (see [`Error::code`]) used by the HTTP API and CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("marker token {marker:?} occurs inside pair text")]
    MarkerCollision { marker: String },
    #[error("field `{0}` is empty after normalization")]
    EmptyField(&'static str),
    #[error("invalid marker format: {0}")]
    InvalidMarkers(String),
    #[error("unknown id {0}")]
    UnknownId(String),
    #[error("storage failure (retriable): {0}")]
    Storage(#[from] std::io::Error),
    #[error("corrupt record at line {line}: {reason}")]
    CorruptRecord { line: usize, reason: String },
    #[error("illegal state transition for {id}: {from} -> {to}")]
    InvalidTransition { id: String, from: String, to: String },

    #[error("corpus contains no tokens")]
    EmptyCorpus,
    #[error("training corpus is empty")]
    EmptyTrainingSet,
    #[error("candidate {0} has no reference")]
    MissingReference(usize),
    #[error("reference text is empty")]
    EmptyReference,
    #[error("pair {0} carries no cn_type label")]
    UnlabeledPair(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("backend timed out after {attempts} attempt(s)")]
    BackendTimeout { attempts: u32 },
    #[error("backend error: {0}")]
    Backend(String),
    #[error("backend output contains no parsable counter-narrative: {raw:?}")]
    MalformedOutput { raw: String },
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("fixture bank is empty")]
    EmptyFixtureBank,
    #[error("backend failed its health probe: {0}")]
    Unhealthy(String),

    #[error("annotator {annotator} scored pair {pair} more than once")]
    DuplicateAnnotator { pair: String, annotator: String },
    #[error("pair {0} already has two judgments")]
    TooManyJudgments(String),
    #[error("score {0} is outside 0..=3")]
    ScoreOutOfRange(i64),
    #[error("insufficient pool: {0}")]
    InsufficientPool(String),
    #[error("dataset contains a single class")]
    SingleClassDataset,
    #[error("test set is empty")]
    EmptyTestSet,

    #[error("pair {id} is in state {state}, expected {expected}")]
    WrongState { id: String, state: String, expected: String },
    #[error("edited counter-narrative is empty or unchanged")]
    EmptyEdit,
    #[error("no events for condition {0}")]
    NoEvents(String),
    #[error("experiment {0} is closed")]
    ExperimentClosed(String),
    #[error("reported elapsed time {elapsed_ms} ms exceeds wall-clock {wall_ms} ms")]
    TimingInconsistent { elapsed_ms: u64, wall_ms: u64 },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::MarkerCollision { .. } => "marker_collision",
            Error::EmptyField(_) => "empty_field",
            Error::InvalidMarkers(_) => "invalid_markers",
            Error::UnknownId(_) => "unknown_id",
            Error::Storage(_) => "storage",
            Error::CorruptRecord { .. } => "corrupt_record",
            Error::InvalidTransition { .. } => "invalid_transition",
            Error::EmptyCorpus => "empty_corpus",
            Error::EmptyTrainingSet => "empty_training_set",
            Error::MissingReference(_) => "missing_reference",
            Error::EmptyReference => "empty_reference",
            Error::UnlabeledPair(_) => "unlabeled_pair",
            Error::InvalidConfig(_) => "invalid_config",
            Error::BackendTimeout { .. } => "backend_timeout",
            Error::Backend(_) => "backend_error",
            Error::MalformedOutput { .. } => "malformed_output",
            Error::MalformedResponse(_) => "malformed_response",
            Error::EmptyFixtureBank => "empty_fixture_bank",
            Error::Unhealthy(_) => "unhealthy_backend",
            Error::DuplicateAnnotator { .. } => "duplicate_annotator",
            Error::TooManyJudgments(_) => "too_many_judgments",
            Error::ScoreOutOfRange(_) => "score_out_of_range",
            Error::InsufficientPool(_) => "insufficient_pool",
            Error::SingleClassDataset => "single_class_dataset",
            Error::EmptyTestSet => "empty_test_set",
            Error::WrongState { .. } => "wrong_state",
            Error::EmptyEdit => "empty_edit",
            Error::NoEvents(_) => "no_events",
            Error::ExperimentClosed(_) => "experiment_closed",
            Error::TimingInconsistent { .. } => "timing_inconsistent",
            Error::Json(_) => "invalid_json",
        }
    }

    /// Storage and transport failures may succeed on retry.
    pub fn is_retriable(&self) -> bool {
        matches!(
            self,
            Error::Storage(_) | Error::BackendTimeout { .. } | Error::Backend(_)
        )
    }
}
