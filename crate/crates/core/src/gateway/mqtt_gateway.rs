//! MQTT-side gateway: subscribes to the device data filter and the
//! query/response topics, forwards normalized readings, and answers
//! queries by publishing middleware results back to the caller's
//! response topic.

use std::sync::atomic::Ordering;
use std::sync::Arc;

use log::{debug, error, warn};
use tokio::task::JoinHandle;

use crate::mqtt::{topic_matches, MqttClientError, MqttPublisher, MqttSubscriber, SubscriberEvent};

use super::forward::{ForwardError, Forwarder, GatewayStats};
use super::normalize::normalize_mqtt;
use super::MqttGatewaySettings;

/// Parses a query payload `{protocol?, limit?, since?}` into middleware
/// query parameters. `Ok(None)` is the `limit: 0` short circuit.
pub fn parse_query_payload(payload: &[u8]) -> Result<Option<Vec<(String, String)>>, &'static str> {
    let text = std::str::from_utf8(payload).map_err(|_| "payload is not UTF-8")?;
    let value: serde_json::Value = serde_json::from_str(text).map_err(|_| "payload is not JSON")?;
    let obj = value.as_object().ok_or("query must be a JSON object")?;

    let mut params = Vec::new();
    for (key, value) in obj {
        match key.as_str() {
            "protocol" => {
                let protocol = value.as_str().ok_or("protocol must be a string")?;
                params.push(("protocol".to_string(), protocol.to_string()));
            }
            "limit" => {
                let limit = value
                    .as_u64()
                    .ok_or("limit must be a nonnegative integer")?;
                if limit == 0 {
                    return Ok(None);
                }
                params.push(("limit".to_string(), limit.to_string()));
            }
            "since" => {
                let since = value.as_str().ok_or("since must be a string")?;
                params.push(("since".to_string(), since.to_string()));
            }
            _ => return Err("unknown query key"),
        }
    }
    Ok(Some(params))
}

/// Running MQTT gateway.
pub struct MqttGateway {
    task: JoinHandle<()>,
    stats: Arc<GatewayStats>,
}

impl MqttGateway {
    pub async fn start(
        settings: &MqttGatewaySettings,
        forwarder: Arc<Forwarder>,
    ) -> Result<MqttGateway, MqttClientError> {
        let subscriber = MqttSubscriber::connect(
            &settings.broker_addr,
            &settings.client_id,
            &[&settings.subscribe_filter, &settings.query_filter],
        )
        .await?;
        let publisher = MqttPublisher::connect(
            &settings.broker_addr,
            &format!("{}-responder", settings.client_id),
        )
        .await?;

        let stats = forwarder.stats();
        let task = tokio::spawn(run_loop(settings.clone(), subscriber, publisher, forwarder));
        Ok(MqttGateway { task, stats })
    }

    pub fn stats(&self) -> Arc<GatewayStats> {
        self.stats.clone()
    }
}

impl Drop for MqttGateway {
    fn drop(&mut self) {
        self.task.abort();
    }
}

async fn run_loop(
    settings: MqttGatewaySettings,
    mut subscriber: MqttSubscriber,
    mut publisher: MqttPublisher,
    forwarder: Arc<Forwarder>,
) {
    let stats = forwarder.stats();
    while let Some(event) = subscriber.recv().await {
        match event {
            SubscriberEvent::Message { topic, payload } => {
                // Query topics take precedence over the data filter when a
                // topic happens to match both.
                if topic_matches(&settings.query_filter, &topic).unwrap_or(false) {
                    handle_query(&settings, &topic, &payload, &forwarder, &mut publisher).await;
                } else if topic_matches(&settings.subscribe_filter, &topic).unwrap_or(false) {
                    handle_data(&topic, &payload, &forwarder, &stats).await;
                } else {
                    debug!("mqtt gateway: ignoring topic {topic:?}");
                }
            }
            SubscriberEvent::ConnectionLost(reason) => {
                error!("mqtt gateway: broker connection lost: {reason}");
                break;
            }
        }
    }
}

async fn handle_data(topic: &str, payload: &[u8], forwarder: &Forwarder, stats: &GatewayStats) {
    match normalize_mqtt(topic, payload) {
        Ok(record) => {
            stats.normalized.fetch_add(1, Ordering::Relaxed);
            // forward() counts the outcome; nothing else to do on failure.
            let _ = forwarder.forward(&record).await;
        }
        Err(e) => {
            stats.normalize_errors.fetch_add(1, Ordering::Relaxed);
            warn!("mqtt gateway: dropping unnormalizable message on {topic:?}: {e}");
        }
    }
}

async fn handle_query(
    settings: &MqttGatewaySettings,
    topic: &str,
    payload: &[u8],
    forwarder: &Forwarder,
    publisher: &mut MqttPublisher,
) {
    forwarder.stats().queries.fetch_add(1, Ordering::Relaxed);
    let caller = topic.rsplit('/').next().unwrap_or_default();
    let response_topic = format!("{}{caller}", settings.response_prefix);

    let body: Vec<u8> = match parse_query_payload(payload) {
        Ok(None) => b"[]".to_vec(),
        Ok(Some(params)) => match forwarder.fetch_readings(&params).await {
            Ok(body) => body,
            Err(ForwardError::FetchRejected { .. }) => serde_json::json!({ "error": "bad_query" })
                .to_string()
                .into_bytes(),
            Err(e) => {
                warn!("mqtt gateway: query fetch failed: {e}");
                serde_json::json!({ "error": "unavailable" })
                    .to_string()
                    .into_bytes()
            }
        },
        Err(reason) => {
            debug!("mqtt gateway: bad query on {topic:?}: {reason}");
            serde_json::json!({ "error": "bad_query" })
                .to_string()
                .into_bytes()
        }
    };

    if let Err(e) = publisher.publish(&response_topic, &body, 0).await {
        warn!("mqtt gateway: failed to publish query response: {e}");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_payload_translation() {
        let params = parse_query_payload(br#"{"protocol":"coap","limit":1}"#)
            .unwrap()
            .unwrap();
        assert!(params.contains(&("protocol".to_string(), "coap".to_string())));
        assert!(params.contains(&("limit".to_string(), "1".to_string())));

        assert_eq!(parse_query_payload(b"{}").unwrap(), Some(vec![]));
        assert_eq!(parse_query_payload(br#"{"limit":0}"#).unwrap(), None);
        assert!(parse_query_payload(b"not-json").is_err());
        assert!(parse_query_payload(br#"{"limit":"one"}"#).is_err());
        assert!(parse_query_payload(br#"{"bogus":1}"#).is_err());
    }
}
