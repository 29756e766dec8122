use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Label, PairScore, ScorerKind, DEFAULT_THRESHOLD};
use crate::corpus::PairId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub hs: String,
    pub cn: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub label: Label,
    pub confidence: f64,
}

/// Client for an external pair classifier: `POST {hs, cn}` answered with
/// `{label, confidence}`. The returned label is recomputed from the
/// confidence with the local threshold.
#[derive(Debug, Clone)]
pub struct RemoteScorer {
    client: reqwest::Client,
    endpoint: String,
    retries: u32,
    pub threshold: f64,
}

impl RemoteScorer {
    pub fn new(endpoint: impl Into<String>, timeout: Duration, retries: u32) -> Result<Self> {
        Ok(Self {
            client: crate::http::client(timeout)?,
            endpoint: endpoint.into(),
            retries,
            threshold: DEFAULT_THRESHOLD,
        })
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    async fn call(&self, req: &ScoreRequest) -> Result<ScoreResponse> {
        crate::http::post_json(&self.client, &self.endpoint, req, self.retries).await
    }

    /// One probe request; any well-formed answer counts as healthy.
    pub async fn health_probe(&self) -> Result<()> {
        let probe = ScoreRequest {
            hs: "health probe".into(),
            cn: "health probe".into(),
        };
        self.call(&probe).await.map(|_| ()).map_err(|e| Error::Unhealthy(e.to_string()))
    }

    pub async fn score(&self, pair_id: PairId, hs: &str, cn: &str) -> Result<PairScore> {
        let resp = self
            .call(&ScoreRequest {
                hs: hs.to_owned(),
                cn: cn.to_owned(),
            })
            .await?;
        PairScore::from_confidence(pair_id, resp.confidence, self.threshold, ScorerKind::Remote)
    }
}
