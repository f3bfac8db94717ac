//! The adversarial target model, behind a small request/response contract.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use ildae_core::simulator::CuePredictor;
use ildae_core::types::TextField;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

pub const PROBABILITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    #[serde(default)]
    pub task_name: String,
    pub text_fields: Vec<TextField>,
    pub candidate_labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub label_probs: BTreeMap<String, f64>,
    pub predicted_label: String,
}

impl PredictResponse {
    pub fn probability(&self, label: &str) -> f64 {
        self.label_probs.get(label).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PredictorError {
    #[error("predictor did not answer within {0:?}")]
    Timeout(Duration),
    #[error("predictor unavailable: {0}")]
    Unavailable(String),
    #[error("predictor broke its contract: {0}")]
    Contract(String),
    #[error("invalid predictor request: {0}")]
    BadRequest(String),
}

/// Checks a response against the request it answers.
pub fn validate_response(req: &PredictRequest, resp: &PredictResponse) -> Result<(), PredictorError> {
    let expected: std::collections::BTreeSet<&String> = req.candidate_labels.iter().collect();
    let got: std::collections::BTreeSet<&String> = resp.label_probs.keys().collect();
    if expected != got {
        return Err(PredictorError::Contract(
            "label_probs keys differ from candidate_labels".into(),
        ));
    }
    if resp.label_probs.values().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(PredictorError::Contract("a probability is outside [0,1]".into()));
    }
    let total: f64 = resp.label_probs.values().sum();
    if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
        return Err(PredictorError::Contract(format!("probabilities sum to {total}")));
    }
    if !req.candidate_labels.contains(&resp.predicted_label) {
        return Err(PredictorError::Contract(format!(
            "predicted label {:?} is not a candidate",
            resp.predicted_label
        )));
    }
    let top = resp.label_probs.values().copied().fold(f64::NEG_INFINITY, f64::max);
    if resp.probability(&resp.predicted_label) < top {
        return Err(PredictorError::Contract("predicted label is not the arg-max".into()));
    }
    Ok(())
}

fn validate_request(req: &PredictRequest) -> Result<(), PredictorError> {
    if req.candidate_labels.is_empty() {
        return Err(PredictorError::BadRequest("candidate_labels is empty".into()));
    }
    let unique: std::collections::BTreeSet<&String> = req.candidate_labels.iter().collect();
    if unique.len() != req.candidate_labels.len() {
        return Err(PredictorError::BadRequest("candidate_labels has duplicates".into()));
    }
    Ok(())
}

#[async_trait]
pub trait Predictor: Send + Sync {
    async fn predict(&self, req: &PredictRequest) -> Result<PredictResponse, PredictorError>;
}

/// In-process stub backed by the simulator's cue classifier.
#[derive(Debug, Clone, Copy)]
pub struct StubPredictor(pub CuePredictor);

impl StubPredictor {
    pub fn new(seed: u64) -> Self {
        Self(CuePredictor::new(seed))
    }
}

#[async_trait]
impl Predictor for StubPredictor {
    async fn predict(&self, req: &PredictRequest) -> Result<PredictResponse, PredictorError> {
        let (probs, predicted_label) = self
            .0
            .predict(&req.text_fields, &req.candidate_labels)
            .map_err(|e| PredictorError::BadRequest(e.to_string()))?;
        Ok(PredictResponse {
            label_probs: req.candidate_labels.iter().cloned().zip(probs).collect(),
            predicted_label,
        })
    }
}

/// Remote predictor speaking the same JSON contract over HTTP POST.
#[derive(Debug, Clone)]
pub struct HttpPredictor {
    url: String,
    client: reqwest::Client,
}

impl HttpPredictor {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Result<Self, PredictorError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| PredictorError::Unavailable(e.to_string()))?;
        Ok(Self {
            url: url.into(),
            client,
        })
    }
}

#[async_trait]
impl Predictor for HttpPredictor {
    async fn predict(&self, req: &PredictRequest) -> Result<PredictResponse, PredictorError> {
        let resp = self.client.post(&self.url).json(req).send().await.map_err(|e| {
            if e.is_timeout() {
                PredictorError::Timeout(Duration::ZERO)
            } else {
                PredictorError::Unavailable(e.to_string())
            }
        })?;
        if !resp.status().is_success() {
            return Err(PredictorError::Unavailable(format!("status {}", resp.status())));
        }
        resp.json().await.map_err(|e| PredictorError::Contract(e.to_string()))
    }
}

/// Wraps a predictor with request validation, a timeout, a concurrency
/// limit and response validation.
#[derive(Clone)]
pub struct PredictorHandle {
    inner: Arc<dyn Predictor>,
    timeout: Duration,
    permits: Arc<Semaphore>,
}

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);
pub const DEFAULT_CONCURRENCY: usize = 8;

impl PredictorHandle {
    pub fn new(inner: Arc<dyn Predictor>, timeout: Duration, concurrency: usize) -> Self {
        Self {
            inner,
            timeout,
            permits: Arc::new(Semaphore::new(concurrency.max(1))),
        }
    }

    pub fn stub(seed: u64) -> Self {
        Self::new(Arc::new(StubPredictor::new(seed)), DEFAULT_TIMEOUT, DEFAULT_CONCURRENCY)
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub async fn predict(&self, req: &PredictRequest) -> Result<PredictResponse, PredictorError> {
        validate_request(req)?;
        let _permit = self
            .permits
            .acquire()
            .await
            .map_err(|_| PredictorError::Unavailable("predictor pool closed".into()))?;
        let resp = match tokio::time::timeout(self.timeout, self.inner.predict(req)).await {
            Err(_) | Ok(Err(PredictorError::Timeout(_))) => return Err(PredictorError::Timeout(self.timeout)),
            Ok(r) => r?,
        };
        validate_response(req, &resp)?;
        Ok(resp)
    }
}
