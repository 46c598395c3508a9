//! Device fleet simulator: N MQTT publishers and M CoAP clients, each
//! emitting one timestamped message per interval for the configured
//! duration, with a send-side log for loss accounting.
//!
//! Tick scheduling is count-based (tick k fires at `start + offset +
//! k * interval`), so the send count per device is exactly
//! `floor(duration / interval)` and scheduling error does not accumulate.

use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use log::{info, warn};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::time::Instant;

use crate::coap::{CoapClient, CoapTimings};
use crate::model::{FleetConfig, FleetConfigError, Protocol, Timestamp};
use crate::mqtt::MqttPublisher;

/// One send attempt as the device experienced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SendLogEntry {
    pub device: String,
    pub protocol: Protocol,
    pub seq: u64,
    pub origin_ts: Timestamp,
    pub outcome: SendOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SendOutcome {
    Sent,
    SendFailed,
}

/// Send-side record of one fleet run.
#[derive(Debug, Clone, Default)]
pub struct SendLog {
    pub entries: Vec<SendLogEntry>,
    /// Worst observed wake-up lag behind the schedule, per run.
    pub max_jitter: Duration,
}

impl SendLog {
    pub fn sent_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.outcome == SendOutcome::Sent)
            .count()
    }

    pub fn sent_count_for(&self, protocol: Protocol) -> usize {
        self.entries
            .iter()
            .filter(|e| e.outcome == SendOutcome::Sent && e.protocol == protocol)
            .count()
    }

    pub fn write_ndjson(&self, path: &Path) -> std::io::Result<()> {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&serde_json::to_string(entry).expect("entry serialization cannot fail"));
            out.push('\n');
        }
        std::fs::write(path, out)
    }

    pub fn read_ndjson(path: &Path) -> std::io::Result<SendLog> {
        let raw = std::fs::read_to_string(path)?;
        let mut entries = Vec::new();
        for line in raw.lines().filter(|l| !l.is_empty()) {
            let entry = serde_json::from_str(line)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            entries.push(entry);
        }
        Ok(SendLog {
            entries,
            max_jitter: Duration::ZERO,
        })
    }
}

/// The device payload sent on every tick:
/// `{"device": ..., "timestamp": <canonical now>, "message": "seq-<k>"}`.
pub fn device_payload(device: &str, seq: u64, now: Timestamp) -> String {
    #[derive(Serialize)]
    struct Payload<'a> {
        device: &'a str,
        timestamp: String,
        message: String,
    }
    serde_json::to_string(&Payload {
        device,
        timestamp: now.to_string(),
        message: format!("seq-{seq}"),
    })
    .expect("payload serialization cannot fail")
}

/// Where the fleet sends its traffic.
#[derive(Debug, Clone)]
pub struct FleetEndpoints {
    pub broker_addr: String,
    pub coap_gateway_addr: String,
    pub coap_ingest_path: String,
    pub middleware_base_url: String,
}

#[derive(Debug, Error)]
pub enum FleetError {
    #[error("invalid fleet config: {0}")]
    InvalidConfig(#[from] FleetConfigError),
    #[error("{endpoint} unreachable before start: {reason}")]
    EndpointUnreachable { endpoint: String, reason: String },
}

async fn check_endpoints(endpoints: &FleetEndpoints) -> Result<(), FleetError> {
    if let Err(e) = tokio::net::TcpStream::connect(&endpoints.broker_addr).await {
        return Err(FleetError::EndpointUnreachable {
            endpoint: format!("mqtt broker {}", endpoints.broker_addr),
            reason: e.to_string(),
        });
    }

    let url = format!(
        "{}/api/v1/openapi.json",
        endpoints.middleware_base_url.trim_end_matches('/')
    );
    match reqwest::get(&url).await {
        Ok(response) if response.status().is_success() => {}
        Ok(response) => {
            return Err(FleetError::EndpointUnreachable {
                endpoint: format!("middleware {}", endpoints.middleware_base_url),
                reason: format!("status {}", response.status()),
            })
        }
        Err(e) => {
            return Err(FleetError::EndpointUnreachable {
                endpoint: format!("middleware {}", endpoints.middleware_base_url),
                reason: e.to_string(),
            })
        }
    }

    // Any CoAP response at all (even 4.00 for GET-on-ingest) proves the
    // gateway socket is being served.
    let probe_timings = CoapTimings {
        ack_timeout: Duration::from_millis(500),
        max_retransmits: 2,
        non_timeout: Duration::from_millis(500),
    };
    let mut probe = CoapClient::with_timings(&endpoints.coap_gateway_addr, probe_timings);
    if let Err(e) = probe.get(&endpoints.coap_ingest_path, &[]).await {
        return Err(FleetError::EndpointUnreachable {
            endpoint: format!("coap gateway {}", endpoints.coap_gateway_addr),
            reason: e.to_string(),
        });
    }
    Ok(())
}

/// Runs the whole fleet to completion and returns the send log.
pub async fn run_fleet(
    cfg: &FleetConfig,
    endpoints: &FleetEndpoints,
) -> Result<SendLog, FleetError> {
    cfg.validate()?;
    check_endpoints(endpoints).await?;

    let ticks = cfg.ticks_per_device();
    let interval = Duration::from_millis(cfg.interval_ms);
    let entries: Arc<Mutex<Vec<SendLogEntry>>> = Arc::new(Mutex::new(Vec::new()));
    let jitters: Arc<Mutex<Vec<Duration>>> = Arc::new(Mutex::new(Vec::new()));

    // Connect every MQTT publisher before the first tick so connection
    // failures abort the run instead of surfacing as send errors.
    let mut mqtt_publishers = Vec::new();
    for i in 0..cfg.mqtt_devices {
        let device = format!("mqtt-{}", i + 1);
        let publisher = MqttPublisher::connect(&endpoints.broker_addr, &device)
            .await
            .map_err(|e| FleetError::EndpointUnreachable {
                endpoint: format!("mqtt broker {}", endpoints.broker_addr),
                reason: e.to_string(),
            })?;
        mqtt_publishers.push((device, publisher));
    }

    let start = Instant::now() + Duration::from_millis(100);
    let mut tasks = Vec::new();

    for (device, mut publisher) in mqtt_publishers {
        let entries = entries.clone();
        let jitters = jitters.clone();
        let qos = cfg.qos;
        let aligned = cfg.aligned;
        tasks.push(tokio::spawn(async move {
            let offset = phase_offset(aligned, interval);
            let topic = format!("iot/{device}/data");
            let mut max_jitter = Duration::ZERO;
            for seq in 0..ticks {
                let scheduled = start + offset + interval * seq as u32;
                tokio::time::sleep_until(scheduled).await;
                max_jitter = max_jitter.max(scheduled.elapsed());

                let origin_ts = Timestamp::now();
                let payload = device_payload(&device, seq, origin_ts);
                let outcome = match publisher.publish(&topic, payload.as_bytes(), qos).await {
                    Ok(()) => SendOutcome::Sent,
                    Err(e) => {
                        warn!("{device}: publish failed: {e}");
                        SendOutcome::SendFailed
                    }
                };
                entries.lock().unwrap().push(SendLogEntry {
                    device: device.clone(),
                    protocol: Protocol::Mqtt,
                    seq,
                    origin_ts,
                    outcome,
                });
            }
            publisher.disconnect().await;
            jitters.lock().unwrap().push(max_jitter);
        }));
    }

    for i in 0..cfg.coap_devices {
        let device = format!("coap-{}", i + 1);
        let entries = entries.clone();
        let jitters = jitters.clone();
        let gateway_addr = endpoints.coap_gateway_addr.clone();
        let ingest_path = endpoints.coap_ingest_path.clone();
        let aligned = cfg.aligned;
        tasks.push(tokio::spawn(async move {
            let offset = phase_offset(aligned, interval);
            let mut client = CoapClient::new(&gateway_addr);
            let mut max_jitter = Duration::ZERO;
            for seq in 0..ticks {
                let scheduled = start + offset + interval * seq as u32;
                tokio::time::sleep_until(scheduled).await;
                max_jitter = max_jitter.max(scheduled.elapsed());

                let origin_ts = Timestamp::now();
                let payload = device_payload(&device, seq, origin_ts);
                // Fire-and-forget: the datagram leaving counts as sent; a
                // missing response is loss for the analysis to surface.
                let outcome = match client.post_json(&ingest_path, payload.into_bytes()).await {
                    Ok(_) => SendOutcome::Sent,
                    Err(crate::coap::CoapRequestError::Timeout) => SendOutcome::Sent,
                    Err(e) => {
                        warn!("{device}: post failed: {e}");
                        SendOutcome::SendFailed
                    }
                };
                entries.lock().unwrap().push(SendLogEntry {
                    device: device.clone(),
                    protocol: Protocol::Coap,
                    seq,
                    origin_ts,
                    outcome,
                });
            }
            jitters.lock().unwrap().push(max_jitter);
        }));
    }

    for task in tasks {
        let _ = task.await;
    }

    let mut entries = Arc::try_unwrap(entries)
        .expect("all device tasks joined")
        .into_inner()
        .unwrap();
    entries.sort_by(|a, b| {
        a.origin_ts
            .cmp(&b.origin_ts)
            .then_with(|| a.device.cmp(&b.device))
            .then_with(|| a.seq.cmp(&b.seq))
    });

    let max_jitter = jitters
        .lock()
        .unwrap()
        .iter()
        .copied()
        .max()
        .unwrap_or(Duration::ZERO);
    info!(
        "fleet done: {} attempts, max scheduling jitter {:.1} ms",
        entries.len(),
        max_jitter.as_secs_f64() * 1000.0
    );
    if max_jitter > interval / 2 {
        warn!("scheduling jitter exceeded interval/2; timings may be unreliable on this host");
    }

    Ok(SendLog {
        entries,
        max_jitter,
    })
}

fn phase_offset(aligned: bool, interval: Duration) -> Duration {
    if aligned {
        Duration::ZERO
    } else {
        interval.mul_f64(rand::rng().random::<f64>())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::normalize_mqtt;
    use crate::model::parse_ingest_record;

    #[test]
    fn payload_shape_and_sequence() {
        let ts = Timestamp::parse("2024-03-01T12:00:00.000000Z").unwrap();
        assert_eq!(
            device_payload("mqtt-1", 0, ts),
            r#"{"device":"mqtt-1","timestamp":"2024-03-01T12:00:00.000000Z","message":"seq-0"}"#
        );
        assert!(device_payload("mqtt-1", 7, ts).contains("seq-7"));
    }

    #[test]
    fn generated_payloads_survive_the_whole_pipeline() {
        // device payload -> gateway normalization -> canonical JSON ->
        // middleware-side parse.
        let ts = Timestamp::now();
        for seq in 0..5 {
            let payload = device_payload("mqtt-3", seq, ts);
            let record = normalize_mqtt("iot/mqtt-3/data", payload.as_bytes()).unwrap();
            let reparsed = parse_ingest_record(&record.to_json()).unwrap();
            assert_eq!(reparsed, record);
            assert_eq!(reparsed.message, format!("seq-{seq}"));
        }
    }

    #[test]
    fn send_log_round_trips_through_ndjson() {
        let log = SendLog {
            entries: vec![
                SendLogEntry {
                    device: "mqtt-1".into(),
                    protocol: Protocol::Mqtt,
                    seq: 0,
                    origin_ts: Timestamp::from_micros(1_000_000),
                    outcome: SendOutcome::Sent,
                },
                SendLogEntry {
                    device: "coap-1".into(),
                    protocol: Protocol::Coap,
                    seq: 0,
                    origin_ts: Timestamp::from_micros(2_000_000),
                    outcome: SendOutcome::SendFailed,
                },
            ],
            max_jitter: Duration::ZERO,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("send_log.ndjson");
        log.write_ndjson(&path).unwrap();
        let read = SendLog::read_ndjson(&path).unwrap();
        assert_eq!(read.entries, log.entries);
        assert_eq!(read.sent_count(), 1);
        assert_eq!(read.sent_count_for(Protocol::Mqtt), 1);
        assert_eq!(read.sent_count_for(Protocol::Coap), 0);
    }

    #[tokio::test]
    async fn rejects_invalid_config_before_touching_endpoints() {
        let cfg = FleetConfig {
            mqtt_devices: 0,
            coap_devices: 0,
            ..FleetConfig::default()
        };
        let endpoints = FleetEndpoints {
            broker_addr: "127.0.0.1:1".into(),
            coap_gateway_addr: "127.0.0.1:1".into(),
            coap_ingest_path: "ingest".into(),
            middleware_base_url: "http://127.0.0.1:1".into(),
        };
        assert!(matches!(
            run_fleet(&cfg, &endpoints).await,
            Err(FleetError::InvalidConfig(FleetConfigError::NoDevices))
        ));
    }

    #[tokio::test]
    async fn fails_fast_when_broker_is_down() {
        let cfg = FleetConfig {
            mqtt_devices: 1,
            coap_devices: 0,
            duration_s: 1,
            ..FleetConfig::default()
        };
        let endpoints = FleetEndpoints {
            broker_addr: "127.0.0.1:1".into(),
            coap_gateway_addr: "127.0.0.1:1".into(),
            coap_ingest_path: "ingest".into(),
            middleware_base_url: "http://127.0.0.1:1".into(),
        };
        assert!(matches!(
            run_fleet(&cfg, &endpoints).await,
            Err(FleetError::EndpointUnreachable { .. })
        ));
    }
}
