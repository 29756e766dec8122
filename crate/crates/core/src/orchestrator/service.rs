//! REST front of the pipeline. Handlers run concurrently; every mutation
//! goes through one lock around the pipeline, so the log has one writer.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::{Deserialize, Serialize};

use super::{EffortReport, ExpertDecision, Pipeline, PipelineConfig, ReportOptions, ReviewerMode};
use crate::author::{batch_generate, Author, BatchOptions, GenerationReport, GenerationRequest};
use crate::corpus::{DatasetRecord, PairId, PairState, Source};
use crate::error::Error;
use crate::review::ReviewScore;

const IDEMPOTENCY_HEADER: &str = "idempotency-key";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// How long a fetched item stays reserved for its reviewer.
    pub claim_timeout: Duration,
    /// Allowance when comparing reported elapsed time with the claim's age.
    pub timing_slack: Duration,
    pub report: ReportOptions,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            claim_timeout: Duration::from_secs(300),
            timing_slack: Duration::from_secs(2),
            report: ReportOptions::default(),
        }
    }
}

#[derive(Debug)]
struct Inner {
    pipeline: Pipeline,
    review_claims: HashMap<(PairId, String), Instant>,
    expert_claims: HashMap<PairId, Instant>,
}

pub struct AppState {
    inner: Mutex<Inner>,
    author: Option<Author>,
    config: ServiceConfig,
}

impl AppState {
    pub fn new(pipeline: Pipeline, author: Option<Author>, config: ServiceConfig) -> Arc<Self> {
        Arc::new(Self {
            inner: Mutex::new(Inner {
                pipeline,
                review_claims: HashMap::new(),
                expert_claims: HashMap::new(),
            }),
            author,
            config,
        })
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Runs `f` with the pipeline; used by tests and the CLI to inspect state.
    pub fn with_pipeline<T>(&self, f: impl FnOnce(&mut Pipeline) -> T) -> T {
        f(&mut self.lock().pipeline)
    }
}

/// Error body: `{"error": {"code": ..., "message": ...}}`.
#[derive(Debug)]
pub struct ApiError(pub Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self(e)
    }
}

fn status_of(e: &Error) -> StatusCode {
    match e {
        Error::UnknownId(_) => StatusCode::NOT_FOUND,
        Error::NoEvents(_) => StatusCode::NOT_FOUND,
        Error::DuplicateAnnotator { .. }
        | Error::TooManyJudgments(_)
        | Error::WrongState { .. }
        | Error::InvalidTransition { .. }
        | Error::ExperimentClosed(_) => StatusCode::CONFLICT,
        Error::Storage(_) | Error::Unhealthy(_) => StatusCode::SERVICE_UNAVAILABLE,
        Error::BackendTimeout { .. } => StatusCode::GATEWAY_TIMEOUT,
        Error::Backend(_) | Error::MalformedResponse(_) | Error::MalformedOutput { .. } => StatusCode::BAD_GATEWAY,
        Error::CorruptRecord { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({
            "error": {
                "code": self.0.code(),
                "message": self.0.to_string(),
                "retriable": self.0.is_retriable(),
            }
        });
        (status_of(&self.0), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn idempotency_key(headers: &HeaderMap, body_key: Option<String>) -> Option<String> {
    body_key.or_else(|| {
        headers
            .get(IDEMPOTENCY_HEADER)
            .and_then(|v| v.to_str().ok())
            .map(str::to_owned)
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Appended {
    pub seq: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateSpec {
    pub hs: Vec<String>,
    #[serde(default)]
    pub request: Option<GenerationRequest>,
    #[serde(default)]
    pub id_prefix: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CandidatesRequest {
    #[serde(default)]
    pub pairs: Vec<DatasetRecord>,
    #[serde(default)]
    pub generate: Option<GenerateSpec>,
    #[serde(default)]
    pub idempotency_key: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CandidatesResponse {
    pub added: Vec<PairId>,
    pub generation: Option<GenerationReport>,
}

async fn post_candidates(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    Json(req): Json<CandidatesRequest>,
) -> ApiResult<Json<CandidatesResponse>> {
    let key = idempotency_key(&headers, req.idempotency_key.clone());
    let mut pairs = Vec::new();
    for record in req.pairs {
        pairs.push(record.into_pair(PairId::random)?);
    }
    let mut generation = None;
    if let Some(spec) = req.generate {
        let author = app
            .author
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("no author backend configured".into()))?;
        let template = spec.request.unwrap_or_default();
        let prefix = spec.id_prefix.unwrap_or_else(|| format!("g{}-", Utc::now().timestamp_millis()));
        let batch = batch_generate(&spec.hs, author, &template, &BatchOptions::new(prefix)).await;
        pairs.extend(batch.pool);
        generation = Some(batch.report);
    }

    let mut inner = app.lock();
    let mut added = Vec::with_capacity(pairs.len());
    for (i, pair) in pairs.into_iter().enumerate() {
        let id = pair.id.clone();
        let pair_key = key.as_ref().map(|k| format!("{k}:{i}"));
        inner.pipeline.add_pair(pair, pair_key)?;
        added.push(id);
    }
    Ok(Json(CandidatesResponse { added, generation }))
}

#[derive(Debug, Deserialize)]
struct AnnotatorQuery {
    annotator: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReviewItem {
    pub pair_id: PairId,
    pub hs: String,
    pub cn: String,
    pub claim_expires_in_ms: u64,
}

/// Hands out a pair the annotator has not scored, reserving one of its two
/// judgment slots. An annotator holding a live claim gets the same pair back.
async fn review_next(
    State(app): State<Arc<AppState>>,
    Query(q): Query<AnnotatorQuery>,
) -> ApiResult<Response> {
    let timeout = app.config.claim_timeout;
    let mut inner = app.lock();
    let now = Instant::now();
    inner.review_claims.retain(|_, at| now.duration_since(*at) < timeout);

    let Inner {
        pipeline,
        review_claims,
        ..
    } = &mut *inner;
    let state = pipeline.state();
    let held = review_claims
        .keys()
        .find(|(_, a)| *a == q.annotator)
        .map(|(p, _)| p.clone());
    let pick = held.or_else(|| {
        let mut claimed: HashMap<&PairId, usize> = HashMap::new();
        for (p, _) in review_claims.keys() {
            *claimed.entry(p).or_default() += 1;
        }
        pipeline.next_for_annotator(&q.annotator, |id| claimed.get(id).copied().unwrap_or(0))
    });
    let Some(pair_id) = pick else {
        return Ok(StatusCode::NO_CONTENT.into_response());
    };
    let claimed_at = *review_claims.entry((pair_id.clone(), q.annotator)).or_insert(now);
    let pair = state.pair(&pair_id)?;
    let item = ReviewItem {
        pair_id,
        hs: pair.hate_speech.clone(),
        cn: pair.counter_narrative.clone(),
        claim_expires_in_ms: timeout.saturating_sub(now.duration_since(claimed_at)).as_millis() as u64,
    };
    Ok(Json(item).into_response())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreSubmission {
    #[serde(flatten)]
    pub score: ReviewScore,
    #[serde(default)]
    pub idempotency_key: Option<String>,
}

fn check_timing(claimed_at: Option<Instant>, elapsed_ms: u64, slack: Duration) -> Result<(), Error> {
    if let Some(at) = claimed_at {
        let wall_ms = at.elapsed().as_millis() as u64;
        if elapsed_ms > wall_ms + slack.as_millis() as u64 {
            return Err(Error::TimingInconsistent { elapsed_ms, wall_ms });
        }
    }
    Ok(())
}

async fn review_score(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    Json(sub): Json<ScoreSubmission>,
) -> ApiResult<Json<Appended>> {
    let key = idempotency_key(&headers, sub.idempotency_key);
    let mut inner = app.lock();
    if let Some(seq) = key.as_ref().and_then(|k| inner.pipeline.state().idempotency.get(k)) {
        return Ok(Json(Appended { seq: *seq }));
    }
    let claim = (sub.score.pair_id.clone(), sub.score.annotator_id.clone());
    check_timing(inner.review_claims.get(&claim).copied(), sub.score.elapsed_ms, app.config.timing_slack)?;
    let seq = inner.pipeline.submit_score(sub.score, key)?;
    inner.review_claims.remove(&claim);
    Ok(Json(Appended { seq }))
}

#[derive(Debug, Deserialize)]
struct OperatorQuery {
    operator: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExpertItem {
    pub pair_id: PairId,
    pub hs: String,
    pub cn: String,
    pub experiment: String,
    pub condition: ReviewerMode,
}

/// Next pending pair for the operator, following their condition order.
async fn expert_next(
    State(app): State<Arc<AppState>>,
    Query(q): Query<OperatorQuery>,
) -> ApiResult<Response> {
    let mut inner = app.lock();
    let found = match inner.pipeline.next_for_operator(&q.operator) {
        Some(item) => {
            let pair = inner.pipeline.state().pair(&item.pair_id)?;
            Some(ExpertItem {
                hs: pair.hate_speech.clone(),
                cn: pair.counter_narrative.clone(),
                pair_id: item.pair_id,
                experiment: item.experiment,
                condition: item.condition,
            })
        }
        None => None,
    };
    match found {
        Some(item) => {
            inner.expert_claims.entry(item.pair_id.clone()).or_insert_with(Instant::now);
            Ok(Json(item).into_response())
        }
        None => Ok(StatusCode::NO_CONTENT.into_response()),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionSubmission {
    #[serde(flatten)]
    pub decision: ExpertDecision,
    #[serde(default)]
    pub idempotency_key: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DecisionResponse {
    pub seq: u64,
    pub state: PairState,
    pub edit_rate: Option<f64>,
    pub replacement: Option<PairId>,
}

async fn expert_decision(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    Json(sub): Json<DecisionSubmission>,
) -> ApiResult<Json<DecisionResponse>> {
    let key = idempotency_key(&headers, sub.idempotency_key);
    let pair_id = sub.decision.pair_id.clone();
    let mut inner = app.lock();
    let duplicate = key.as_ref().is_some_and(|k| inner.pipeline.state().idempotency.contains_key(k));
    if !duplicate {
        check_timing(
            inner.expert_claims.get(&pair_id).copied(),
            sub.decision.elapsed_ms,
            app.config.timing_slack,
        )?;
    }
    let seq = inner.pipeline.record_decision(sub.decision, key)?;
    inner.expert_claims.remove(&pair_id);
    let state = inner.pipeline.state();
    let record = state
        .routed_in
        .get(&pair_id)
        .and_then(|k| state.condition(k))
        .and_then(|c| c.decisions.get(&pair_id));
    Ok(Json(DecisionResponse {
        seq,
        state: state.pair(&pair_id)?.state,
        edit_rate: record.and_then(|r| r.edit_rate),
        replacement: record.and_then(|r| r.replacement.clone()),
    }))
}

#[derive(Debug, Deserialize)]
struct ReportQuery {
    condition: ReviewerMode,
    #[serde(default)]
    experiment: Option<String>,
}

async fn effort(State(app): State<Arc<AppState>>, Query(q): Query<ReportQuery>) -> ApiResult<Json<EffortReport>> {
    let inner = app.lock();
    let experiment = match q.experiment {
        Some(e) => e,
        None => inner.pipeline.resolve_experiment(q.condition)?,
    };
    Ok(Json(inner.pipeline.effort_report(&experiment, q.condition, &app.config.report)?))
}

async fn export_accepted(State(app): State<Arc<AppState>>) -> Json<Vec<DatasetRecord>> {
    Json(app.lock().pipeline.export_accepted())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpenExperiment {
    pub experiment: String,
    pub operators: Vec<String>,
    #[serde(default)]
    pub rng_seed: u64,
}

async fn open_experiment(
    State(app): State<Arc<AppState>>,
    Json(req): Json<OpenExperiment>,
) -> ApiResult<Json<Appended>> {
    let seq = app.lock().pipeline.open_experiment(&req.experiment, req.operators, req.rng_seed)?;
    Ok(Json(Appended { seq }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RouteSummary {
    pub passed: usize,
    pub filtered_out: usize,
    pub routed: usize,
}

async fn route_condition(
    State(app): State<Arc<AppState>>,
    Path(experiment): Path<String>,
    Json(config): Json<PipelineConfig>,
) -> ApiResult<Json<RouteSummary>> {
    let plan = app.lock().pipeline.route_condition(&experiment, &config, None)?;
    Ok(Json(RouteSummary {
        passed: plan.passed.len(),
        filtered_out: plan.filtered_out.len(),
        routed: plan.assignments.len(),
    }))
}

async fn close_experiment(
    State(app): State<Arc<AppState>>,
    Path(experiment): Path<String>,
) -> ApiResult<Json<Appended>> {
    let seq = app.lock().pipeline.close_experiment(&experiment)?;
    Ok(Json(Appended { seq }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub last_seq: u64,
    pub pairs: usize,
    pub generated: usize,
    pub seed: usize,
}

async fn health(State(app): State<Arc<AppState>>) -> Json<Health> {
    let inner = app.lock();
    let state = inner.pipeline.state();
    Json(Health {
        last_seq: state.last_seq,
        pairs: state.pairs.len(),
        generated: state.generated().count(),
        seed: state.pairs.values().filter(|p| p.source == Source::SeedDataset).count(),
    })
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/candidates", post(post_candidates))
        .route("/review/next", get(review_next))
        .route("/review/score", post(review_score))
        .route("/expert/next", get(expert_next))
        .route("/expert/decision", post(expert_decision))
        .route("/reports/effort", get(effort))
        .route("/export/accepted", get(export_accepted))
        .route("/experiments", post(open_experiment))
        .route("/experiments/{id}/route", post(route_condition))
        .route("/experiments/{id}/close", post(close_experiment))
        .with_state(app)
}

/// Binds `addr` and serves until the process stops.
pub async fn serve(addr: SocketAddr, app: Arc<AppState>) -> crate::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(app)).await?;
    Ok(())
}
