//! HTTP API integration: registration, auth lifecycle, ingestion,
//! retrieval, statistics, and the served API description.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use hetbridge::middleware::{MiddlewareServer, ROUTES};
use hetbridge::model::Timestamp;
use hetbridge::storage::Store;
use serde_json::{json, Value};

async fn server(ttl: Duration) -> (MiddlewareServer, Arc<Store>) {
    let store = Arc::new(Store::new());
    let server = MiddlewareServer::bind("127.0.0.1:0", store.clone(), ttl)
        .await
        .expect("middleware binds");
    (server, store)
}

async fn register(base: &str, name: &str, kind: &str) -> (u16, Value) {
    let response = reqwest::Client::new()
        .post(format!("{base}/api/v1/devices"))
        .json(&json!({ "name": name, "kind": kind }))
        .send()
        .await
        .unwrap();
    let status = response.status().as_u16();
    let body = response.json().await.unwrap_or(Value::Null);
    (status, body)
}

async fn post_reading(base: &str, token: &str, body: &str) -> (u16, Value) {
    let response = reqwest::Client::new()
        .post(format!("{base}/api/v1/readings"))
        .header("authorization", format!("Bearer {token}"))
        .header("content-type", "application/json")
        .body(body.to_string())
        .send()
        .await
        .unwrap();
    let status = response.status().as_u16();
    let body = response.json().await.unwrap_or(Value::Null);
    (status, body)
}

fn record_body(device: &str, protocol: &str, message: &str, origin_ts: &str) -> String {
    json!({
        "device": device,
        "protocol": protocol,
        "message": message,
        "origin_ts": origin_ts,
    })
    .to_string()
}

#[tokio::test]
async fn registration_and_validation() {
    let (server, _) = server(Duration::from_secs(60)).await;
    let base = server.base_url();

    let (status, body) = register(&base, "mqtt-gw", "gateway").await;
    assert_eq!(status, 201);
    assert!(body["principal_id"].as_u64().unwrap() >= 1);
    let token = body["token"].as_str().unwrap();
    assert_eq!(token.len(), 32);
    assert!(Timestamp::parse(body["expires_at"].as_str().unwrap()).is_ok());

    let (status, body) = register(&base, "mqtt-gw", "gateway").await;
    assert_eq!(status, 409);
    assert_eq!(body["error"], "duplicate_name");

    let (status, _) = register(&base, "", "gateway").await;
    assert_eq!(status, 422);
    let (status, _) = register(&base, "gw2", "ftp").await;
    assert_eq!(status, 422);
}

#[tokio::test]
async fn auth_lifecycle_including_expiry() {
    let (server, _) = server(Duration::from_secs(1)).await;
    let base = server.base_url();
    let (_, reg) = register(&base, "gw", "gateway").await;
    let token = reg["token"].as_str().unwrap();

    let now = Timestamp::now().to_string();
    let body = record_body("dev-1", "mqtt", "seq-0", &now);

    // Fresh token authorizes.
    let (status, _) = post_reading(&base, token, &body).await;
    assert_eq!(status, 201);

    // Missing header.
    let response = reqwest::Client::new()
        .post(format!("{base}/api/v1/readings"))
        .body(body.clone())
        .send()
        .await
        .unwrap();
    assert_eq!(response.status().as_u16(), 401);
    let reason: Value = response.json().await.unwrap();
    assert_eq!(reason["reason"], "missing");

    // Malformed and unknown tokens.
    let (status, reason) = post_reading(&base, "zz", &body).await;
    assert_eq!(
        (status, reason["reason"].as_str().unwrap()),
        (401, "malformed")
    );
    let (status, reason) = post_reading(&base, "00000000000000000000000000000000", &body).await;
    assert_eq!(
        (status, reason["reason"].as_str().unwrap()),
        (401, "unknown")
    );

    // The very same token, two seconds later, is expired.
    tokio::time::sleep(Duration::from_secs(2)).await;
    let (status, reason) = post_reading(&base, token, &body).await;
    assert_eq!(
        (status, reason["reason"].as_str().unwrap()),
        (401, "expired")
    );
}

#[tokio::test]
async fn ingestion_stamps_and_validates() {
    let (server, store) = server(Duration::from_secs(60)).await;
    let base = server.base_url();
    let (_, reg) = register(&base, "gw", "gateway").await;
    let token = reg["token"].as_str().unwrap();

    // Origin 2 ms in the past: sec_diff comes out near +0.002.
    let origin = Timestamp::from_micros(Timestamp::now().micros() - 2_000);
    let (status, body) = post_reading(
        &base,
        token,
        &record_body("dev-1", "mqtt", "seq-0", &origin.to_string()),
    )
    .await;
    assert_eq!(status, 201);
    assert_eq!(body["id"], 1);
    let sec_diff = body["sec_diff"].as_f64().unwrap();
    assert!((0.002..0.05).contains(&sec_diff), "sec_diff {sec_diff}");
    assert_eq!(store.len(), 1);

    // Stored row is immediately queryable.
    let rows: Vec<Value> = reqwest::get(format!("{base}/api/v1/readings"))
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["device"], "dev-1");
    assert_eq!(rows[0]["message"], "seq-0");

    // Schema violations are 422.
    let now = Timestamp::now().to_string();
    let (status, _) = post_reading(&base, token, &record_body("x", "ftp", "m", &now)).await;
    assert_eq!(status, 422);
    let (status, _) = post_reading(&base, token, "not json").await;
    assert_eq!(status, 422);
    let (status, _) = post_reading(
        &base,
        token,
        &json!({"device":"x","protocol":"coap","origin_ts": now}).to_string(),
    )
    .await;
    assert_eq!(status, 422);
}

#[tokio::test]
async fn identical_posts_differ_only_in_assigned_fields() {
    let (server, _) = server(Duration::from_secs(60)).await;
    let base = server.base_url();
    let (_, reg) = register(&base, "gw", "gateway").await;
    let token = reg["token"].as_str().unwrap();

    let body = record_body("dev-1", "coap", "seq-9", "2024-03-01T12:00:00.000000Z");
    let (status_a, a) = post_reading(&base, token, &body).await;
    let (status_b, b) = post_reading(&base, token, &body).await;
    assert_eq!((status_a, status_b), (201, 201));
    assert_ne!(a["id"], b["id"]);
    // Everything the response derives from the payload alone is equal.
    let keys: BTreeSet<&str> = ["id", "inserted_ts", "sec_diff"].into();
    for (key, value) in a.as_object().unwrap() {
        if !keys.contains(key.as_str()) {
            assert_eq!(value, &b[key], "field {key} should match");
        }
    }
}

#[tokio::test]
async fn concurrent_posts_get_distinct_ids() {
    let (server, store) = server(Duration::from_secs(60)).await;
    let base = server.base_url();
    let (_, reg) = register(&base, "gw", "gateway").await;
    let token = reg["token"].as_str().unwrap().to_string();

    let mut tasks = Vec::new();
    for i in 0..16 {
        let base = base.clone();
        let token = token.clone();
        tasks.push(tokio::spawn(async move {
            let now = Timestamp::now().to_string();
            let (status, body) = post_reading(
                &base,
                &token,
                &record_body("dev-1", "mqtt", &format!("seq-{i}"), &now),
            )
            .await;
            assert_eq!(status, 201);
            body["id"].as_u64().unwrap()
        }));
    }
    let mut ids = Vec::new();
    for task in tasks {
        ids.push(task.await.unwrap());
    }
    ids.sort_unstable();
    ids.dedup();
    assert_eq!(ids.len(), 16);
    assert_eq!(store.len(), 16);
}

#[tokio::test]
async fn read_path_filters_and_validation() {
    let (server, _) = server(Duration::from_secs(60)).await;
    let base = server.base_url();
    let (_, reg) = register(&base, "gw", "gateway").await;
    let token = reg["token"].as_str().unwrap();

    for i in 0..3 {
        let now = Timestamp::now().to_string();
        post_reading(
            &base,
            token,
            &record_body("c", "coap", &format!("seq-{i}"), &now),
        )
        .await;
    }
    for i in 0..2 {
        let now = Timestamp::now().to_string();
        post_reading(
            &base,
            token,
            &record_body("m", "mqtt", &format!("seq-{i}"), &now),
        )
        .await;
    }

    let rows: Vec<Value> = reqwest::get(format!("{base}/api/v1/readings?protocol=coap"))
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r["protocol"] == "coap"));

    // Newest first, limit respected.
    let rows: Vec<Value> = reqwest::get(format!("{base}/api/v1/readings?limit=2"))
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0]["id"].as_u64() > rows[1]["id"].as_u64());

    for bad in [
        "limit=0",
        "limit=10001",
        "limit=abc",
        "protocol=ftp",
        "since=notats",
        "since=2024-03-01T12:00:00.000001Z&until=2024-03-01T12:00:00.000000Z",
    ] {
        let status = reqwest::get(format!("{base}/api/v1/readings?{bad}"))
            .await
            .unwrap()
            .status()
            .as_u16();
        assert_eq!(status, 422, "expected 422 for {bad}");
    }

    let status = reqwest::get(format!("{base}/api/v1/nowhere"))
        .await
        .unwrap()
        .status()
        .as_u16();
    assert_eq!(status, 404);
}

#[tokio::test]
async fn stats_windows_are_anchored_at_the_newest_reading() {
    let (server, store) = server(Duration::from_secs(60)).await;
    let base = server.base_url();
    let (_, reg) = register(&base, "gw", "gateway").await;
    let token = reg["token"].as_str().unwrap();

    // Empty store: zero counts, no window bounds.
    let dist: Value = reqwest::get(format!("{base}/api/v1/stats/distribution?window_s=5"))
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(
        (dist["mqtt"].as_u64(), dist["coap"].as_u64()),
        (Some(0), Some(0))
    );
    assert!(dist["from_ts"].is_null());

    let series: Vec<Value> = reqwest::get(format!("{base}/api/v1/stats/latency?window_s=5"))
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert!(series.is_empty());

    // The reference round: five of each protocol lands 50/50.
    for i in 0..5 {
        let now = Timestamp::now().to_string();
        post_reading(
            &base,
            token,
            &record_body("m", "mqtt", &format!("seq-{i}"), &now),
        )
        .await;
        let now = Timestamp::now().to_string();
        post_reading(
            &base,
            token,
            &record_body("c", "coap", &format!("seq-{i}"), &now),
        )
        .await;
    }
    let dist: Value = reqwest::get(format!("{base}/api/v1/stats/distribution?window_s=5"))
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(
        (dist["mqtt"].as_u64(), dist["coap"].as_u64()),
        (Some(5), Some(5))
    );

    // Cross-endpoint consistency: same window through get_readings.
    let from = dist["from_ts"].as_str().unwrap();
    let to = Timestamp::parse(dist["to_ts"].as_str().unwrap()).unwrap();
    let until = Timestamp::from_micros(to.micros() + 1);
    let rows: Vec<Value> = reqwest::get(format!(
        "{base}/api/v1/readings?since={from}&until={until}&limit=10000&protocol=mqtt"
    ))
    .await
    .unwrap()
    .json()
    .await
    .unwrap();
    assert_eq!(rows.len(), 5);

    let series: Vec<Value> = reqwest::get(format!("{base}/api/v1/stats/latency?window_s=5"))
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(series.len(), 10);
    let times: Vec<&str> = series
        .iter()
        .map(|p| p["inserted_ts"].as_str().unwrap())
        .collect();
    let mut sorted = times.clone();
    sorted.sort_unstable();
    assert_eq!(times, sorted, "latency series must ascend");

    let series_coap: Vec<Value> = reqwest::get(format!(
        "{base}/api/v1/stats/latency?window_s=5&protocol=coap"
    ))
    .await
    .unwrap()
    .json()
    .await
    .unwrap();
    assert_eq!(series_coap.len(), 5);

    for bad in ["", "window_s=0", "window_s=x"] {
        let status = reqwest::get(format!("{base}/api/v1/stats/distribution?{bad}"))
            .await
            .unwrap()
            .status()
            .as_u16();
        assert_eq!(status, 422, "expected 422 for {bad:?}");
    }

    drop(store);
}

#[tokio::test]
async fn read_auth_flag_locks_down_the_read_path() {
    use hetbridge::middleware::AppState;
    let store = Arc::new(Store::new());
    let state = AppState::new(store, Duration::from_secs(60)).with_read_auth();
    let server = hetbridge::middleware::MiddlewareServer::bind_state("127.0.0.1:0", state)
        .await
        .unwrap();
    let base = server.base_url();
    let (_, reg) = register(&base, "gw", "gateway").await;
    let token = reg["token"].as_str().unwrap();

    for path in [
        "/api/v1/readings",
        "/api/v1/stats/distribution?window_s=5",
        "/api/v1/stats/latency?window_s=5",
    ] {
        let status = reqwest::get(format!("{base}{path}"))
            .await
            .unwrap()
            .status()
            .as_u16();
        assert_eq!(status, 401, "unauthenticated read of {path}");

        let status = reqwest::Client::new()
            .get(format!("{base}{path}"))
            .header("authorization", format!("Bearer {token}"))
            .send()
            .await
            .unwrap()
            .status()
            .as_u16();
        assert_eq!(status, 200, "authenticated read of {path}");
    }
}

#[tokio::test]
async fn served_openapi_matches_router() {
    let (server, _) = server(Duration::from_secs(60)).await;
    let base = server.base_url();

    let doc: Value = reqwest::get(format!("{base}/api/v1/openapi.json"))
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(doc["openapi"], "3.0.3");

    let mut documented = BTreeSet::new();
    for (path, methods) in doc["paths"].as_object().unwrap() {
        for method in methods.as_object().unwrap().keys() {
            documented.insert(format!("{} {path}", method.to_ascii_uppercase()));
        }
    }
    let implemented: BTreeSet<String> = ROUTES
        .iter()
        .map(|(method, path)| format!("{method} {path}"))
        .collect();
    assert_eq!(documented, implemented, "document and router must agree");

    // The bearer scheme guards ingestion.
    assert_eq!(
        doc["paths"]["/api/v1/readings"]["post"]["security"][0]["bearerToken"],
        json!([])
    );
}
