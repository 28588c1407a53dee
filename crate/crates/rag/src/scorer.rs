//! Remote critic-token scorer.
//!
//! For each document the client POSTs `{"prompt": ..., "critic_token": ...}`
//! to the configured endpoint and reads back `{"logprob": <number>}`, the
//! log-probability the model assigns to the critic token after the rendered
//! prompt. That value is the document's raw score.

use std::time::Duration;

use bee_core::balancing::{CriticPrompt, ScoreRecord, ScoreSource};
use serde::Serialize;
use serde_json::Value;

pub const DEFAULT_TIMEOUT_SECS: f64 = 30.0;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoreError {
    #[error("scorer configuration: {0}")]
    Config(String),
    #[error("network error talking to the scorer: {0}")]
    Network(String),
    #[error("scorer did not answer within {0:?}")]
    Timeout(Duration),
    #[error("scorer returned HTTP {0}")]
    Status(u16),
    #[error("malformed scorer response: {0}")]
    Malformed(String),
    #[error("malformed scorer response: no numeric \"logprob\" field in {0}")]
    MissingLogprob(String),
}

impl ScoreError {
    /// Whether retrying the same request may succeed.
    pub fn is_retriable(&self) -> bool {
        match self {
            ScoreError::Network(_) | ScoreError::Timeout(_) => true,
            ScoreError::Status(code) => *code == 429 || *code >= 500,
            ScoreError::Config(_) | ScoreError::Malformed(_) | ScoreError::MissingLogprob(_) => false,
        }
    }
}

#[derive(Serialize)]
struct Request<'a> {
    prompt: &'a str,
    critic_token: &'a str,
}

#[derive(Debug, Clone)]
pub struct RemoteScorer {
    endpoint: String,
    timeout: Duration,
    max_in_flight: usize,
    prompt: CriticPrompt,
    agent: ureq::Agent,
}

impl RemoteScorer {
    pub fn new(endpoint: &str, timeout_secs: f64, max_in_flight: usize) -> Result<Self, ScoreError> {
        if endpoint.trim().is_empty() {
            return Err(ScoreError::Config("remote scorer endpoint is empty".into()));
        }
        if !(timeout_secs > 0.0) || !timeout_secs.is_finite() {
            return Err(ScoreError::Config("timeout must be positive".into()));
        }
        if max_in_flight == 0 {
            return Err(ScoreError::Config("at least one request must be allowed in flight".into()));
        }
        let timeout = Duration::from_secs_f64(timeout_secs);
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            endpoint: endpoint.to_string(),
            timeout,
            max_in_flight,
            prompt: CriticPrompt::default(),
            agent,
        })
    }

    pub fn with_prompt(mut self, prompt: CriticPrompt) -> Self {
        self.prompt = prompt;
        self
    }

    /// Log-probability of the critic token for one document.
    pub fn score(&self, query: &str, document: &str) -> Result<f64, ScoreError> {
        let prompt = self
            .prompt
            .render(query, document)
            .map_err(|e| ScoreError::Config(e.to_string()))?;
        let body = Request {
            prompt: &prompt,
            critic_token: &self.prompt.critic_token,
        };
        let payload = serde_json::to_string(&body).map_err(|e| ScoreError::Malformed(e.to_string()))?;
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Content-Type", "application/json")
            .send(payload.as_str())
            .map_err(|e| self.classify(e))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(ScoreError::Status(status));
        }
        let text = resp.body_mut().read_to_string().map_err(|e| self.classify(e))?;
        parse_logprob(&text)
    }

    /// Scores every document, keeping at most `max_in_flight` requests open.
    /// Results come back in document order.
    pub fn score_all(&self, query: &str, documents: &[String]) -> Vec<Result<f64, ScoreError>> {
        let mut out = Vec::with_capacity(documents.len());
        for batch in documents.chunks(self.max_in_flight) {
            std::thread::scope(|s| {
                let handles: Vec<_> = batch
                    .iter()
                    .map(|doc| s.spawn(move || self.score(query, doc)))
                    .collect();
                for h in handles {
                    out.push(h.join().unwrap_or_else(|_| Err(ScoreError::Network("scoring thread panicked".into()))));
                }
            });
        }
        out
    }

    /// [`score_all`](Self::score_all) as score records; fails on the first error.
    pub fn records(&self, query: &str, documents: &[String]) -> Result<Vec<ScoreRecord>, ScoreError> {
        self.score_all(query, documents)
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.map(|s| ScoreRecord::new(i, s, ScoreSource::Remote)))
            .collect()
    }

    fn classify(&self, e: ureq::Error) -> ScoreError {
        match e {
            ureq::Error::Timeout(_) => ScoreError::Timeout(self.timeout),
            ureq::Error::Io(io)
                if matches!(io.kind(), std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock) =>
            {
                ScoreError::Timeout(self.timeout)
            }
            ureq::Error::StatusCode(code) => ScoreError::Status(code),
            ureq::Error::BadUri(u) => ScoreError::Config(format!("bad endpoint URL {u:?}")),
            other => ScoreError::Network(other.to_string()),
        }
    }
}

pub fn parse_logprob(text: &str) -> Result<f64, ScoreError> {
    let value: Value = serde_json::from_str(text).map_err(|e| ScoreError::Malformed(e.to_string()))?;
    let Value::Object(map) = &value else {
        return Err(ScoreError::Malformed(format!("expected a JSON object, got {value}")));
    };
    match map.get("logprob").and_then(Value::as_f64) {
        Some(lp) if lp.is_finite() => Ok(lp),
        _ => Err(ScoreError::MissingLogprob(truncate(text))),
    }
}

fn truncate(text: &str) -> String {
    text.chars().take(200).collect()
}
