//! HTTP route table and handlers.
//!
//! Status vocabulary: 201 create, 200 read, 401 auth, 404 unknown route,
//! 409 conflict, 422 validation, 503 storage unavailable.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::json;

use crate::model::{parse_ingest_record, Protocol, Timestamp};
use crate::storage::{ReadingsFilter, Store, MAX_LIMIT};

use super::auth::{authenticate, register, RegisterError};
use super::openapi;

/// Implemented method/path pairs. The router is built from this table and
/// the served API description is contract-tested against it.
pub const ROUTES: &[(&str, &str)] = &[
    ("POST", "/api/v1/devices"),
    ("POST", "/api/v1/readings"),
    ("GET", "/api/v1/readings"),
    ("GET", "/api/v1/stats/distribution"),
    ("GET", "/api/v1/stats/latency"),
    ("GET", "/api/v1/openapi.json"),
];

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub token_ttl: Duration,
    /// Off by default: the read path is open so any client can retrieve
    /// data regardless of which protocol inserted it.
    pub read_auth: bool,
}

impl AppState {
    pub fn new(store: Arc<Store>, token_ttl: Duration) -> AppState {
        AppState {
            store,
            token_ttl,
            read_auth: false,
        }
    }

    pub fn with_read_auth(mut self) -> AppState {
        self.read_auth = true;
        self
    }
}

pub fn build_router(state: AppState) -> Router {
    let mut router = Router::new();
    for (method, path) in ROUTES {
        let method_router = match (*method, *path) {
            ("POST", "/api/v1/devices") => post(register_device),
            ("POST", "/api/v1/readings") => post(post_reading),
            ("GET", "/api/v1/readings") => get(get_readings),
            ("GET", "/api/v1/stats/distribution") => get(get_distribution),
            ("GET", "/api/v1/stats/latency") => get(get_latency_series),
            ("GET", "/api/v1/openapi.json") => get(get_openapi),
            other => unreachable!("route {other:?} has no handler"),
        };
        router = router.route(path, method_router);
    }
    router.fallback(unknown_route).with_state(state)
}

fn validation_error(message: impl ToString) -> Response {
    (
        StatusCode::UNPROCESSABLE_ENTITY,
        Json(json!({ "error": message.to_string() })),
    )
        .into_response()
}

async fn unknown_route() -> Response {
    (
        StatusCode::NOT_FOUND,
        Json(json!({ "error": "unknown route" })),
    )
        .into_response()
}

async fn register_device(State(state): State<AppState>, body: Bytes) -> Response {
    let parsed: serde_json::Value = match serde_json::from_slice(&body) {
        Ok(value) => value,
        Err(_) => return validation_error("body is not valid JSON"),
    };
    let name = parsed.get("name").and_then(|v| v.as_str()).unwrap_or("");
    let kind = parsed.get("kind").and_then(|v| v.as_str()).unwrap_or("");

    match register(&state.store, name, kind, state.token_ttl, Timestamp::now()) {
        Ok(registration) => (StatusCode::CREATED, Json(registration)).into_response(),
        Err(RegisterError::Duplicate(e)) => (
            StatusCode::CONFLICT,
            Json(json!({ "error": "duplicate_name", "detail": e.to_string() })),
        )
            .into_response(),
        Err(e) => validation_error(e),
    }
}

#[derive(Debug, Serialize)]
struct InsertReply {
    id: u64,
    inserted_ts: Timestamp,
    sec_diff: f64,
}

/// Verifies the bearer token, yielding the 401 response on failure.
fn check_auth(state: &AppState, headers: &HeaderMap) -> Option<Response> {
    let authorization = headers
        .get("authorization")
        .and_then(|value| value.to_str().ok());
    match authenticate(&state.store, authorization, Timestamp::now()) {
        Ok(_) => None,
        Err(e) => Some(
            (
                StatusCode::UNAUTHORIZED,
                Json(json!({ "reason": e.reason() })),
            )
                .into_response(),
        ),
    }
}

async fn post_reading(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Response {
    if let Some(denied) = check_auth(&state, &headers) {
        return denied;
    }

    let text = match std::str::from_utf8(&body) {
        Ok(text) => text,
        Err(_) => return validation_error("body is not UTF-8"),
    };
    let record = match parse_ingest_record(text) {
        Ok(record) => record,
        Err(e) => return validation_error(e),
    };

    // Insertion timestamp comes from the server clock at handler entry.
    match state.store.insert(&record, Timestamp::now()) {
        Ok(reading) => (
            StatusCode::CREATED,
            Json(InsertReply {
                id: reading.id,
                inserted_ts: reading.inserted_ts,
                sec_diff: reading.sec_diff,
            }),
        )
            .into_response(),
        Err(e) => (
            StatusCode::SERVICE_UNAVAILABLE,
            Json(json!({ "error": e.to_string() })),
        )
            .into_response(),
    }
}

#[allow(clippy::result_large_err)]
fn parse_filter(params: &HashMap<String, String>) -> Result<ReadingsFilter, Response> {
    let mut filter = ReadingsFilter::default();
    if let Some(protocol) = params.get("protocol") {
        filter.protocol = Some(protocol.parse::<Protocol>().map_err(validation_error)?);
    }
    if let Some(since) = params.get("since") {
        filter.since = Some(Timestamp::parse(since).map_err(validation_error)?);
    }
    if let Some(until) = params.get("until") {
        filter.until = Some(Timestamp::parse(until).map_err(validation_error)?);
    }
    if let Some(limit) = params.get("limit") {
        filter.limit = limit
            .parse::<usize>()
            .map_err(|_| validation_error("limit must be an integer"))?;
    }
    filter.validate().map_err(validation_error)?;
    Ok(filter)
}

async fn get_readings(
    State(state): State<AppState>,
    headers: HeaderMap,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    if state.read_auth {
        if let Some(denied) = check_auth(&state, &headers) {
            return denied;
        }
    }
    let filter = match parse_filter(&params) {
        Ok(filter) => filter,
        Err(response) => return response,
    };
    Json(state.store.query(&filter)).into_response()
}

#[allow(clippy::result_large_err)]
fn parse_window_s(params: &HashMap<String, String>) -> Result<u64, Response> {
    let raw = params
        .get("window_s")
        .ok_or_else(|| validation_error("window_s is required"))?;
    match raw.parse::<u64>() {
        Ok(window_s) if window_s >= 1 => Ok(window_s),
        _ => Err(validation_error("window_s must be an integer >= 1")),
    }
}

/// Window anchored at the newest reading (not wall clock): readings with
/// `inserted_ts` in the inclusive interval `[newest - window_s, newest]`.
/// Returns `(since, until_exclusive, from_ts, to_ts)`.
fn window_bounds(
    store: &Store,
    window_s: u64,
) -> Option<(Timestamp, Timestamp, Timestamp, Timestamp)> {
    let newest = store.newest_inserted()?;
    let from = Timestamp::from_micros(newest.micros() - window_s as i64 * 1_000_000);
    let until = Timestamp::from_micros(newest.micros() + 1);
    Some((from, until, from, newest))
}

#[derive(Debug, Serialize)]
struct Distribution {
    mqtt: u64,
    coap: u64,
    window_s: u64,
    from_ts: Option<Timestamp>,
    to_ts: Option<Timestamp>,
}

async fn get_distribution(
    State(state): State<AppState>,
    headers: HeaderMap,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    if state.read_auth {
        if let Some(denied) = check_auth(&state, &headers) {
            return denied;
        }
    }
    let window_s = match parse_window_s(&params) {
        Ok(window_s) => window_s,
        Err(response) => return response,
    };
    let reply = match window_bounds(&state.store, window_s) {
        Some((since, until, from_ts, to_ts)) => {
            let counts = state.store.count_by_protocol(since, until);
            Distribution {
                mqtt: counts.mqtt,
                coap: counts.coap,
                window_s,
                from_ts: Some(from_ts),
                to_ts: Some(to_ts),
            }
        }
        None => Distribution {
            mqtt: 0,
            coap: 0,
            window_s,
            from_ts: None,
            to_ts: None,
        },
    };
    Json(reply).into_response()
}

#[derive(Debug, Serialize)]
struct LatencyPoint {
    inserted_ts: Timestamp,
    sec_diff: f64,
    protocol: Protocol,
}

async fn get_latency_series(
    State(state): State<AppState>,
    headers: HeaderMap,
    Query(params): Query<HashMap<String, String>>,
) -> Response {
    if state.read_auth {
        if let Some(denied) = check_auth(&state, &headers) {
            return denied;
        }
    }
    let window_s = match parse_window_s(&params) {
        Ok(window_s) => window_s,
        Err(response) => return response,
    };
    let protocol = match params.get("protocol") {
        Some(raw) => match raw.parse::<Protocol>() {
            Ok(protocol) => Some(protocol),
            Err(e) => return validation_error(e),
        },
        None => None,
    };

    let points: Vec<LatencyPoint> = match window_bounds(&state.store, window_s) {
        Some((since, until, _, _)) => {
            let filter = ReadingsFilter {
                protocol,
                since: Some(since),
                until: Some(until),
                limit: MAX_LIMIT,
            };
            let mut readings = state.store.query(&filter);
            readings.reverse(); // newest-first -> ascending by inserted_ts
            readings
                .into_iter()
                .map(|r| LatencyPoint {
                    inserted_ts: r.inserted_ts,
                    sec_diff: r.sec_diff,
                    protocol: r.protocol,
                })
                .collect()
        }
        None => Vec::new(),
    };
    Json(points).into_response()
}

async fn get_openapi() -> Response {
    Json(openapi::document()).into_response()
}
