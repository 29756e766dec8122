//! Candidate generation: backend clients, the offline stub, and harvesting
//! of over-generated blocks into new pairs.

mod stub;

pub use stub::{stub_generate, FixtureBank, StubAuthor};

use std::hash::Hasher;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use fnv::FnvHasher;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use crate::corpus::{parse_stream, Fragment, HsCnPair, MarkerFormat, Origin, PairId, Source};
use crate::error::{Error, Result};
use crate::text::NormalizationPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    /// Marker-format text: a serialized HS condition or a corpus prefix.
    pub prompt: String,
    pub max_new_tokens: usize,
    pub top_p: f64,
    pub temperature: f64,
    pub n_samples: usize,
}

impl Default for GenerationRequest {
    fn default() -> Self {
        Self {
            prompt: String::new(),
            max_new_tokens: 128,
            top_p: 0.9,
            temperature: 1.0,
            n_samples: 1,
        }
    }
}

impl GenerationRequest {
    pub fn for_hs(hs: &str, fmt: &MarkerFormat) -> Result<Self> {
        Ok(Self {
            prompt: fmt.serialize_condition(hs)?,
            ..Self::default()
        })
    }

    /// Same parameters, conditioned on another HS.
    pub fn with_hs(&self, hs: &str, fmt: &MarkerFormat) -> Result<Self> {
        Ok(Self {
            prompt: fmt.serialize_condition(hs)?,
            ..self.clone()
        })
    }

    /// The HS of a single-condition prompt.
    pub fn condition_hs(&self, fmt: &MarkerFormat) -> Option<&str> {
        self.prompt
            .trim()
            .strip_prefix(fmt.hs_start.as_str())?
            .strip_suffix(fmt.hs_end.as_str())
            .map(str::trim)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::InvalidConfig(format!("top_p {} not in (0, 1]", self.top_p)));
        }
        if self.max_new_tokens == 0 {
            return Err(Error::InvalidConfig("max_new_tokens must be positive".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidConfig(format!("temperature {} must be positive", self.temperature)));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidConfig("n_samples must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Remote,
    Stub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthorBackend {
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub retries: u32,
    #[serde(default)]
    pub stub_seed: u64,
    /// Concurrent requests during batch runs.
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_in_flight() -> usize {
    4
}

impl AuthorBackend {
    pub fn stub(seed: u64) -> Self {
        Self {
            kind: BackendKind::Stub,
            endpoint: None,
            timeout_ms: default_timeout_ms(),
            retries: 0,
            stub_seed: seed,
            max_in_flight: default_in_flight(),
        }
    }

    pub fn remote(endpoint: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Remote,
            endpoint: Some(endpoint.into()),
            ..Self::stub(0)
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RemoteResponse {
    texts: Vec<String>,
}

/// A ready-to-call author.
#[derive(Debug, Clone)]
pub enum Author {
    Stub { author: StubAuthor, seed: u64 },
    Remote { client: reqwest::Client, endpoint: String, retries: u32 },
}

fn prompt_seed(seed: u64, prompt: &str) -> u64 {
    let mut h = FnvHasher::default();
    h.write_u64(seed);
    h.write(prompt.as_bytes());
    h.finish()
}

impl Author {
    pub fn from_backend(backend: &AuthorBackend) -> Result<Self> {
        match backend.kind {
            BackendKind::Stub => Ok(Self::Stub {
                author: StubAuthor::builtin(),
                seed: backend.stub_seed,
            }),
            BackendKind::Remote => Ok(Self::Remote {
                client: crate::http::client(Duration::from_millis(backend.timeout_ms))?,
                endpoint: backend
                    .endpoint
                    .clone()
                    .ok_or_else(|| Error::InvalidConfig("remote backend needs an endpoint".into()))?,
                retries: backend.retries,
            }),
        }
    }

    pub fn fmt(&self) -> MarkerFormat {
        match self {
            Author::Stub { author, .. } => author.fmt.clone(),
            Author::Remote { .. } => MarkerFormat::default(),
        }
    }

    /// Raw continuation texts for one request. The stub's seed mixes in the
    /// prompt so results do not depend on call order.
    pub async fn generate(&self, req: &GenerationRequest) -> Result<Vec<String>> {
        req.validate()?;
        match self {
            Author::Stub { author, seed } => Ok(vec![author.generate(req, prompt_seed(*seed, &req.prompt))]),
            Author::Remote {
                client,
                endpoint,
                retries,
            } => {
                let resp: RemoteResponse = crate::http::post_json(client, endpoint, req, *retries).await?;
                Ok(resp.texts)
            }
        }
    }

    /// A minimal generation call; remote backends must pass before batches.
    pub async fn health_probe(&self) -> Result<()> {
        let probe = GenerationRequest {
            max_new_tokens: 1,
            ..GenerationRequest::for_hs("health probe", &self.fmt())?
        };
        self.generate(&probe).await.map(|_| ()).map_err(|e| Error::Unhealthy(e.to_string()))
    }
}

/// Candidates obtained from one HS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub primary: HsCnPair,
    pub harvested: Vec<HsCnPair>,
    pub fragments: Vec<Fragment>,
    /// Blocks dropped because their CN repeated their HS.
    pub dropped_echoes: usize,
}

/// Turns raw backend texts into pairs. The leading CN block answers `hs`;
/// every complete HS-CN block after it becomes a harvested pair.
pub fn harvest(
    hs: &str,
    texts: &[String],
    fmt: &MarkerFormat,
    id: &PairId,
    created_at: DateTime<Utc>,
) -> Result<Generation> {
    let policy = NormalizationPolicy::default();
    let echo = |h: &str, c: &str| policy.normalize(h) == policy.normalize(c);
    let mut primary_cn = None;
    let mut harvested = Vec::new();
    let mut fragments = Vec::new();
    let mut dropped_echoes = 0;
    for text in texts {
        let parsed = parse_stream(text, fmt);
        if primary_cn.is_none() {
            primary_cn = parsed.leading_cn().filter(|cn| !echo(hs, cn)).map(str::to_owned);
        }
        for (h, c) in parsed.pairs() {
            if echo(h, c) {
                dropped_echoes += 1;
                continue;
            }
            let k = harvested.len() + 1;
            harvested.push(
                HsCnPair::new(PairId::new(format!("{id}.{k}")), h, c, Source::Generated)?
                    .with_origin(Origin::Harvested)
                    .with_created_at(created_at),
            );
        }
        fragments.extend(parsed.fragments);
    }
    let cn = primary_cn.ok_or_else(|| Error::MalformedOutput { raw: texts.join("\n") })?;
    let primary = HsCnPair::new(id.clone(), hs, cn, Source::Generated)?
        .with_origin(Origin::Conditioned)
        .with_created_at(created_at);
    Ok(Generation {
        primary,
        harvested,
        fragments,
        dropped_echoes,
    })
}

pub async fn generate_for_hs(
    hs: &str,
    author: &Author,
    template: &GenerationRequest,
    id: &PairId,
    created_at: DateTime<Utc>,
) -> Result<Generation> {
    let fmt = author.fmt();
    let req = template.with_hs(hs, &fmt)?;
    let texts = author.generate(&req).await?;
    harvest(hs, &texts, &fmt, id, created_at)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationFailure {
    pub index: usize,
    pub hs: String,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub requested: usize,
    pub succeeded: usize,
    pub primary: usize,
    pub harvested: usize,
    pub fragments: usize,
    pub dropped_echoes: usize,
    pub failures: Vec<GenerationFailure>,
    pub latencies_ms: Vec<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    /// Primaries and harvested pairs, in input order.
    pub pool: Vec<HsCnPair>,
    pub report: GenerationReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOptions {
    pub id_prefix: String,
    pub max_in_flight: usize,
    /// Creation time stamped on every candidate.
    pub created_at: DateTime<Utc>,
}

impl BatchOptions {
    pub fn new(id_prefix: impl Into<String>) -> Self {
        Self {
            id_prefix: id_prefix.into(),
            max_in_flight: default_in_flight(),
            created_at: Utc::now(),
        }
    }
}

/// Generates for every HS with a bounded number of requests in flight.
/// A failing HS is recorded in the report and does not stop the batch.
pub async fn batch_generate(
    hs_list: &[String],
    author: &Author,
    template: &GenerationRequest,
    opts: &BatchOptions,
) -> BatchResult {
    let results: Vec<(Result<Generation>, u64)> = stream::iter(hs_list.iter().cloned().enumerate())
        .map(|(i, hs)| async move {
            let id = PairId::new(format!("{}{i}", opts.id_prefix));
            let start = Instant::now();
            let out = generate_for_hs(&hs, author, template, &id, opts.created_at).await;
            (out, start.elapsed().as_millis() as u64)
        })
        .buffered(opts.max_in_flight.max(1))
        .collect()
        .await;

    let mut batch = BatchResult::default();
    batch.report.requested = hs_list.len();
    for (i, (result, latency)) in results.into_iter().enumerate() {
        batch.report.latencies_ms.push(latency);
        match result {
            Ok(g) => {
                batch.report.succeeded += 1;
                batch.report.primary += 1;
                batch.report.harvested += g.harvested.len();
                batch.report.fragments += g.fragments.len();
                batch.report.dropped_echoes += g.dropped_echoes;
                batch.pool.push(g.primary);
                batch.pool.extend(g.harvested);
            }
            Err(e) => batch.report.failures.push(GenerationFailure {
                index: i,
                hs: hs_list[i].clone(),
                code: e.code().to_owned(),
                message: e.to_string(),
            }),
        }
    }
    batch
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed_time() -> DateTime<Utc> {
        DateTime::from_timestamp(1_600_000_000, 0).unwrap()
    }

    #[test]
    fn request_validation() {
        let ok = GenerationRequest::for_hs("h", &MarkerFormat::default()).unwrap();
        assert!(ok.validate().is_ok());
        assert_eq!(ok.condition_hs(&MarkerFormat::default()), Some("h"));
        for bad in [
            GenerationRequest { top_p: 0.0, ..ok.clone() },
            GenerationRequest { top_p: 1.5, ..ok.clone() },
            GenerationRequest { max_new_tokens: 0, ..ok.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn harvest_truncated_tail() {
        let fmt = MarkerFormat::default();
        let raw = "<|CN|> first answer <|endCN|> <|HS|> other hs <|endHS|> <|CN|> other cn <|endCN|> <|HS|> x <|endHS|> <|CN|> cut".to_owned();
        let g = harvest("input hs", &[raw], &fmt, &PairId::new("g0"), fixed_time()).unwrap();
        assert_eq!(g.primary.counter_narrative, "first answer");
        assert_eq!(g.primary.hate_speech, "input hs");
        assert_eq!(g.harvested.len(), 1);
        assert_eq!(g.harvested[0].id.as_str(), "g0.1");
        assert_eq!(g.harvested[0].origin, Some(Origin::Harvested));
        assert_eq!(g.fragments.len(), 1);
    }

    #[test]
    fn harvest_without_leading_cn_fails() {
        let raw = "no markers at all".to_owned();
        let err = harvest("hs", &[raw], &MarkerFormat::default(), &PairId::new("g"), fixed_time()).unwrap_err();
        assert!(matches!(err, Error::MalformedOutput { .. }));
    }

    #[test]
    fn echoes_are_dropped() {
        let raw = "<|CN|> hs <|endCN|> <|HS|> a b <|endHS|> <|CN|> A  b <|endCN|>".to_owned();
        let err = harvest("HS", &[raw.clone()], &MarkerFormat::default(), &PairId::new("g"), fixed_time());
        assert!(matches!(err, Err(Error::MalformedOutput { .. })));
        let g = harvest("other", &[raw], &MarkerFormat::default(), &PairId::new("g"), fixed_time()).unwrap();
        assert_eq!(g.dropped_echoes, 1);
        assert!(g.harvested.is_empty());
    }

    #[tokio::test]
    async fn empty_batch() {
        let author = Author::from_backend(&AuthorBackend::stub(0)).unwrap();
        let out = batch_generate(&[], &author, &GenerationRequest::default(), &BatchOptions::new("g")).await;
        assert!(out.pool.is_empty());
        assert_eq!(out.report, GenerationReport::default());
    }

    #[tokio::test]
    async fn stub_batch_is_deterministic_and_ordered() {
        let author = Author::from_backend(&AuthorBackend::stub(3)).unwrap();
        let hs: Vec<String> = (0..20).map(|i| format!("hate speech number {i}")).collect();
        let template = GenerationRequest {
            n_samples: 2,
            ..Default::default()
        };
        let opts = BatchOptions {
            created_at: fixed_time(),
            ..BatchOptions::new("g")
        };
        let a = batch_generate(&hs, &author, &template, &opts).await;
        let b = batch_generate(&hs, &author, &template, &BatchOptions { max_in_flight: 1, ..opts }).await;
        assert_eq!(a.pool, b.pool);
        assert_eq!(a.report.primary, 20);
        let primaries: Vec<_> = a.pool.iter().filter(|p| p.origin == Some(Origin::Conditioned)).collect();
        for (i, p) in primaries.iter().enumerate() {
            assert_eq!(p.hate_speech, hs[i]);
        }
    }
}
