//! Blocking HTTP clients for the external encoder and scorer services.
//!
//! Encoder: `POST {endpoint}/encode` with `{"texts": [...]}`, answered by
//! `{"dimension": d, "vectors": [[...], ...]}` in request order.
//!
//! Scorer: `POST {endpoint}/score` with `{"pairs": [{"a": .., "b": ..}, ...]}`,
//! answered by `{"prob_similar": [...]}` in request order.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub timeout_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            backoff_ms: 200,
            timeout_ms: 30_000,
        }
    }
}

#[derive(Serialize, Deserialize)]
pub struct EncodeRequest {
    pub texts: Vec<String>,
}

#[derive(Serialize, Deserialize)]
pub struct EncodeResponse {
    pub dimension: usize,
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
pub struct ScorePair {
    pub a: String,
    pub b: String,
}

#[derive(Serialize, Deserialize)]
pub struct ScoreRequest {
    pub pairs: Vec<ScorePair>,
}

#[derive(Serialize, Deserialize)]
pub struct ScoreResponse {
    pub prob_similar: Vec<f64>,
}

pub struct ExternalClient {
    base: String,
    http: reqwest::blocking::Client,
    retry: RetryPolicy,
}

impl ExternalClient {
    pub fn new(endpoint: &str, retry: RetryPolicy) -> Result<Self> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(retry.timeout_ms))
            .build()
            .map_err(|e| Error::External {
                retryable: false,
                message: e.to_string(),
            })?;
        Ok(ExternalClient {
            base: endpoint.trim_end_matches('/').to_string(),
            http,
            retry,
        })
    }

    fn post_once<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
        &self,
        route: &str,
        body: &Req,
    ) -> Result<Resp> {
        let url = format!("{}{route}", self.base);
        let resp = self
            .http
            .post(&url)
            .json(body)
            .send()
            .map_err(|e| Error::External {
                retryable: true,
                message: format!("{url}: {e}"),
            })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Error::External {
                retryable: status.is_server_error() || status.as_u16() == 429,
                message: format!("{url}: HTTP {status}"),
            });
        }
        resp.json::<Resp>().map_err(|e| Error::External {
            retryable: false,
            message: format!("{url}: malformed body: {e}"),
        })
    }

    fn post<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
        &self,
        route: &str,
        body: &Req,
    ) -> Result<Resp> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.post_once(route, body) {
                Err(e) if e.is_retryable() && attempt < self.retry.max_attempts => {
                    log::warn!("attempt {attempt} failed: {e}; retrying");
                    thread::sleep(Duration::from_millis(self.retry.backoff_ms * attempt as u64));
                }
                other => return other,
            }
        }
    }

    /// Encodes one batch. Returns the reported dimension and one vector per text.
    pub fn encode(&self, texts: &[String]) -> Result<(usize, Vec<Vec<f64>>)> {
        let resp: EncodeResponse = self.post(
            "/encode",
            &EncodeRequest {
                texts: texts.to_vec(),
            },
        )?;
        if resp.vectors.len() != texts.len() {
            return Err(Error::External {
                retryable: false,
                message: format!(
                    "encoder returned {} vectors for {} texts",
                    resp.vectors.len(),
                    texts.len()
                ),
            });
        }
        if let Some(v) = resp.vectors.iter().find(|v| v.len() != resp.dimension) {
            return Err(Error::DimensionMismatch {
                expected: resp.dimension,
                found: v.len(),
            });
        }
        Ok((resp.dimension, resp.vectors))
    }

    /// Scores one batch of text pairs.
    pub fn score(&self, pairs: &[(&str, &str)]) -> Result<Vec<f64>> {
        let req = ScoreRequest {
            pairs: pairs
                .iter()
                .map(|(a, b)| ScorePair {
                    a: a.to_string(),
                    b: b.to_string(),
                })
                .collect(),
        };
        let resp: ScoreResponse = self.post("/score", &req)?;
        if resp.prob_similar.len() != pairs.len() {
            return Err(Error::External {
                retryable: false,
                message: format!(
                    "scorer returned {} scores for {} pairs",
                    resp.prob_similar.len(),
                    pairs.len()
                ),
            });
        }
        Ok(resp.prob_similar)
    }
}
