//! HTTP leg of the gateways: registration, authenticated reading
//! forwarding with bounded retries, and the unauthenticated read path used
//! by the query handlers.
//!
//! Forwarding is fire-and-forget end to end: once retries are exhausted
//! the message is dropped and counted, never queued.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use log::{info, warn};
use serde::Deserialize;
use thiserror::Error;
use tokio::sync::RwLock;

use crate::model::{IngestRecord, Timestamp};

#[derive(Debug, Clone)]
pub struct ForwardConfig {
    pub attempts: u32,
    pub backoff: Duration,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        ForwardConfig {
            attempts: 3,
            backoff: Duration::from_millis(200),
        }
    }
}

/// Conservation counters: every successfully normalized message ends up in
/// exactly one of `forwarded` or `dropped`.
#[derive(Debug, Default)]
pub struct GatewayStats {
    pub normalized: AtomicU64,
    pub normalize_errors: AtomicU64,
    pub forwarded: AtomicU64,
    pub dropped: AtomicU64,
    pub queries: AtomicU64,
}

impl GatewayStats {
    pub fn snapshot(&self) -> (u64, u64, u64) {
        (
            self.normalized.load(Ordering::Relaxed),
            self.forwarded.load(Ordering::Relaxed),
            self.dropped.load(Ordering::Relaxed),
        )
    }
}

/// What the middleware acknowledged for one stored reading.
#[derive(Debug, Clone, Deserialize)]
pub struct ForwardSummary {
    pub id: u64,
    pub inserted_ts: Timestamp,
    pub sec_diff: f64,
}

#[derive(Debug, Error)]
pub enum ForwardError {
    #[error("registration failed: {0}")]
    Registration(String),
    #[error("forward failed after {attempts} attempt(s): {last_error}")]
    ForwardFailed { attempts: u32, last_error: String },
    #[error("middleware unreachable: {0}")]
    FetchUnreachable(String),
    #[error("middleware rejected the query ({status}): {body}")]
    FetchRejected { status: u16, body: String },
}

enum PostOutcome {
    Created(ForwardSummary),
    Unauthorized,
    Rejected(u16, String),
    Retryable(String),
}

/// Authenticated HTTP client for one gateway principal.
pub struct Forwarder {
    client: reqwest::Client,
    base_url: String,
    name: String,
    token: RwLock<String>,
    config: ForwardConfig,
    stats: Arc<GatewayStats>,
}

impl Forwarder {
    /// Registers `name` as a gateway principal and keeps the issued token.
    pub async fn register(
        base_url: &str,
        name: &str,
        config: ForwardConfig,
    ) -> Result<Forwarder, ForwardError> {
        let client = reqwest::Client::new();
        let token = obtain_token(&client, base_url, name).await?;
        info!("gateway {name:?} registered with middleware");
        Ok(Forwarder {
            client,
            base_url: base_url.trim_end_matches('/').to_string(),
            name: name.to_string(),
            token: RwLock::new(token),
            config,
            stats: Arc::new(GatewayStats::default()),
        })
    }

    pub fn stats(&self) -> Arc<GatewayStats> {
        self.stats.clone()
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    /// POSTs one record. Retries connect failures and 5xx up to the
    /// configured attempts with fixed backoff; a 401 triggers one
    /// re-registration. Exhaustion drops the message and bumps the counter.
    pub async fn forward(&self, record: &IngestRecord) -> Result<ForwardSummary, ForwardError> {
        let mut attempt = 0;
        let mut reregistered = false;
        let mut last_error = String::new();
        while attempt < self.config.attempts {
            match self.try_post(record).await {
                PostOutcome::Created(summary) => {
                    self.stats.forwarded.fetch_add(1, Ordering::Relaxed);
                    return Ok(summary);
                }
                PostOutcome::Unauthorized if !reregistered => {
                    reregistered = true;
                    match obtain_token(&self.client, &self.base_url, &self.name).await {
                        Ok(token) => {
                            info!("gateway {:?} re-registered after 401", self.name);
                            *self.token.write().await = token;
                        }
                        Err(e) => {
                            last_error = e.to_string();
                            attempt += 1;
                        }
                    }
                    // Retry immediately with the fresh (or same) token.
                }
                PostOutcome::Unauthorized => {
                    last_error = "still unauthorized after re-registration".into();
                    break;
                }
                PostOutcome::Rejected(status, body) => {
                    last_error = format!("middleware rejected the record ({status}): {body}");
                    break;
                }
                PostOutcome::Retryable(error) => {
                    last_error = error;
                    attempt += 1;
                    if attempt < self.config.attempts {
                        tokio::time::sleep(self.config.backoff).await;
                    }
                }
            }
        }
        self.stats.dropped.fetch_add(1, Ordering::Relaxed);
        warn!("gateway {:?}: dropping message: {last_error}", self.name);
        Err(ForwardError::ForwardFailed {
            attempts: self.config.attempts,
            last_error,
        })
    }

    async fn try_post(&self, record: &IngestRecord) -> PostOutcome {
        let token = self.token.read().await.clone();
        let response = self
            .client
            .post(format!("{}/api/v1/readings", self.base_url))
            .header("authorization", format!("Bearer {token}"))
            .header("content-type", "application/json")
            .body(record.to_json())
            .send()
            .await;
        match response {
            Ok(response) => {
                let status = response.status();
                if status.as_u16() == 201 {
                    match response.json::<ForwardSummary>().await {
                        Ok(summary) => PostOutcome::Created(summary),
                        Err(e) => PostOutcome::Retryable(format!("bad 201 body: {e}")),
                    }
                } else if status.as_u16() == 401 {
                    PostOutcome::Unauthorized
                } else if status.is_server_error() {
                    PostOutcome::Retryable(format!("server error {status}"))
                } else {
                    let body = response.text().await.unwrap_or_default();
                    PostOutcome::Rejected(status.as_u16(), body)
                }
            }
            Err(e) => PostOutcome::Retryable(format!("connect failure: {e}")),
        }
    }

    /// GET /api/v1/readings with pass-through query parameters, returning
    /// the middleware's JSON body verbatim.
    pub async fn fetch_readings(
        &self,
        params: &[(String, String)],
    ) -> Result<Vec<u8>, ForwardError> {
        let response = self
            .client
            .get(format!("{}/api/v1/readings", self.base_url))
            .query(params)
            .send()
            .await
            .map_err(|e| ForwardError::FetchUnreachable(e.to_string()))?;
        let status = response.status().as_u16();
        if status != 200 {
            let body = response.text().await.unwrap_or_default();
            if (400..500).contains(&status) {
                return Err(ForwardError::FetchRejected { status, body });
            }
            return Err(ForwardError::FetchUnreachable(format!(
                "middleware answered {status}"
            )));
        }
        response
            .bytes()
            .await
            .map(|b| b.to_vec())
            .map_err(|e| ForwardError::FetchUnreachable(e.to_string()))
    }
}

async fn obtain_token(
    client: &reqwest::Client,
    base_url: &str,
    name: &str,
) -> Result<String, ForwardError> {
    let response = client
        .post(format!("{}/api/v1/devices", base_url.trim_end_matches('/')))
        .json(&serde_json::json!({ "name": name, "kind": "gateway" }))
        .send()
        .await
        .map_err(|e| ForwardError::Registration(e.to_string()))?;
    let status = response.status();
    if status.as_u16() != 201 {
        let body = response.text().await.unwrap_or_default();
        return Err(ForwardError::Registration(format!("{status}: {body}")));
    }
    let body: serde_json::Value = response
        .json()
        .await
        .map_err(|e| ForwardError::Registration(e.to_string()))?;
    body.get("token")
        .and_then(|t| t.as_str())
        .map(String::from)
        .ok_or_else(|| ForwardError::Registration("no token in response".into()))
}
