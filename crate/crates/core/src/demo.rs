//! One-process reproduction run: broker, middleware, both gateways, and
//! the device fleet on loopback with ephemeral ports, followed by the
//! analysis bundle and a threshold check.
//!
//! Shutdown is ordered (fleet, gateways, middleware, broker) so in-flight
//! forwards drain before anything they depend on goes away.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use log::info;
use serde::Serialize;

use crate::analysis::{self, summarize_counts, DistributionSummary, LossReport};
use crate::gateway::{CoapGateway, ForwardConfig, Forwarder, GatewayConfig, MqttGateway};
use crate::middleware::{MiddlewareServer, DEFAULT_TOKEN_TTL};
use crate::model::{FleetConfig, Protocol};
use crate::mqtt::MqttBroker;
use crate::simulator::{run_fleet, FleetEndpoints};
use crate::storage::Store;

#[derive(Debug, Clone)]
pub struct DemoOptions {
    pub fleet: FleetConfig,
    pub run_dir: PathBuf,
    pub token_ttl: Duration,
}

impl DemoOptions {
    pub fn new(run_dir: PathBuf) -> DemoOptions {
        DemoOptions {
            fleet: FleetConfig::default(),
            run_dir,
            token_ttl: DEFAULT_TOKEN_TTL,
        }
    }
}

/// Pinned acceptance thresholds for a reproduction run.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Thresholds {
    /// Minimum stored/attempted fraction (fire-and-forget tolerance).
    pub min_stored_fraction: f64,
    /// Allowed deviation of each protocol's stored share from 50%.
    pub max_share_deviation: f64,
    /// CoAP median travel time bound on loopback, seconds.
    pub max_coap_median_s: f64,
    /// CoAP spread (max - min) bound on loopback, seconds.
    pub max_coap_spread_s: f64,
    /// MQTT median travel time bound on loopback, seconds.
    pub max_mqtt_median_s: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            min_stored_fraction: 0.95,
            max_share_deviation: 0.10,
            max_coap_median_s: 0.05,
            max_coap_spread_s: 0.05,
            max_mqtt_median_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdOutcome {
    pub stored_ok: bool,
    pub share_ok: bool,
    pub coap_profile_ok: bool,
    pub mqtt_median_ok: bool,
}

impl ThresholdOutcome {
    pub fn pass(&self) -> bool {
        self.stored_ok && self.share_ok && self.coap_profile_ok && self.mqtt_median_ok
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoReport {
    pub run_dir: PathBuf,
    pub attempts: u64,
    pub loss: LossReport,
    pub distribution: DistributionSummary,
    pub coap_median_s: Option<f64>,
    pub coap_spread_s: Option<f64>,
    pub mqtt_median_s: Option<f64>,
    pub thresholds: Thresholds,
    pub outcome: ThresholdOutcome,
}

fn median(sorted: &[f64]) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    })
}

fn sec_diffs_for(points: &[analysis::TravelPoint], protocol: Protocol) -> Vec<f64> {
    let mut diffs: Vec<f64> = points
        .iter()
        .filter(|p| p.protocol == protocol)
        .map(|p| p.sec_diff)
        .collect();
    diffs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    diffs
}

pub async fn run_demo(options: &DemoOptions) -> anyhow::Result<DemoReport> {
    options.fleet.validate().context("invalid fleet config")?;
    std::fs::create_dir_all(&options.run_dir)
        .with_context(|| format!("cannot create run dir {}", options.run_dir.display()))?;

    let store = Arc::new(
        Store::with_wal(&options.run_dir.join("readings.ndjson"))
            .context("cannot open readings log")?,
    );

    // Everything binds loopback with ephemeral ports.
    let middleware = MiddlewareServer::bind("127.0.0.1:0", store.clone(), options.token_ttl)
        .await
        .context("middleware failed to start")?;
    let broker = MqttBroker::bind("127.0.0.1:0")
        .await
        .context("broker failed to start")?;

    let mut gateway_cfg = GatewayConfig::for_middleware(middleware.base_url());
    gateway_cfg.mqtt.broker_addr = broker.local_addr().to_string();
    gateway_cfg.coap.bind_addr = "127.0.0.1:0".to_string();
    gateway_cfg.validate().map_err(anyhow::Error::msg)?;

    let mqtt_forwarder = Arc::new(
        Forwarder::register(
            &gateway_cfg.middleware_base_url,
            "mqtt-gw",
            ForwardConfig::default(),
        )
        .await
        .context("mqtt gateway registration failed")?,
    );
    let coap_forwarder = Arc::new(
        Forwarder::register(
            &gateway_cfg.middleware_base_url,
            "coap-gw",
            ForwardConfig::default(),
        )
        .await
        .context("coap gateway registration failed")?,
    );

    let coap_gateway = CoapGateway::start(&gateway_cfg.coap, coap_forwarder.clone())
        .await
        .context("coap gateway failed to start")?;
    let mqtt_gateway = MqttGateway::start(&gateway_cfg.mqtt, mqtt_forwarder.clone())
        .await
        .context("mqtt gateway failed to start")?;

    let endpoints = FleetEndpoints {
        broker_addr: broker.local_addr().to_string(),
        coap_gateway_addr: coap_gateway.local_addr().to_string(),
        coap_ingest_path: gateway_cfg.coap.ingest_path.clone(),
        middleware_base_url: middleware.base_url(),
    };

    info!(
        "demo: broker {}, coap gateway {}, middleware {}",
        endpoints.broker_addr, endpoints.coap_gateway_addr, endpoints.middleware_base_url
    );

    let send_log = run_fleet(&options.fleet, &endpoints).await?;
    send_log
        .write_ndjson(&options.run_dir.join("send_log.ndjson"))
        .context("cannot write send log")?;

    // Drain: wait for the store to stop growing before tearing down.
    let mut last = store.len();
    let mut stable_checks = 0;
    let deadline = tokio::time::Instant::now() + Duration::from_secs(5);
    while stable_checks < 3 && tokio::time::Instant::now() < deadline {
        tokio::time::sleep(Duration::from_millis(100)).await;
        let now = store.len();
        if now == last {
            stable_checks += 1;
        } else {
            stable_checks = 0;
            last = now;
        }
    }

    // Ordered teardown: gateways, then middleware, then broker.
    drop(mqtt_gateway);
    drop(coap_gateway);
    middleware.shutdown().await;
    drop(broker);

    let readings = store.all_readings();
    let loss = analysis::write_run_reports(&options.run_dir, &readings, &send_log)
        .context("analysis failed")?;

    // Metrics over the full run window.
    let window_s = options.fleet.duration_s.max(1);
    let windowed = analysis::travel_time_rows(&readings, window_s);
    let coap_diffs = sec_diffs_for(&windowed, Protocol::Coap);
    let mqtt_diffs = sec_diffs_for(&windowed, Protocol::Mqtt);
    let coap_median_s = median(&coap_diffs);
    let coap_spread_s = if coap_diffs.is_empty() {
        None
    } else {
        Some(coap_diffs[coap_diffs.len() - 1] - coap_diffs[0])
    };
    let mqtt_median_s = median(&mqtt_diffs);

    let distribution = summarize_counts(loss.stored_by_protocol.mqtt, loss.stored_by_protocol.coap);
    let attempts = send_log.entries.len() as u64;
    let expected = options.fleet.ticks_per_device()
        * (options.fleet.mqtt_devices + options.fleet.coap_devices) as u64;

    let thresholds = Thresholds::default();
    let share = |count: u64| count as f64 / loss.stored.max(1) as f64;
    let outcome = ThresholdOutcome {
        stored_ok: loss.stored as f64 >= thresholds.min_stored_fraction * expected as f64,
        share_ok: (share(loss.stored_by_protocol.mqtt) - 0.5).abs()
            <= thresholds.max_share_deviation
            && (share(loss.stored_by_protocol.coap) - 0.5).abs() <= thresholds.max_share_deviation,
        coap_profile_ok: coap_median_s.is_some_and(|m| m < thresholds.max_coap_median_s)
            && coap_spread_s.is_some_and(|s| s < thresholds.max_coap_spread_s),
        mqtt_median_ok: mqtt_median_s.is_some_and(|m| m < thresholds.max_mqtt_median_s),
    };

    Ok(DemoReport {
        run_dir: options.run_dir.clone(),
        attempts,
        loss,
        distribution,
        coap_median_s,
        coap_spread_s,
        mqtt_median_s,
        thresholds,
        outcome,
    })
}

impl DemoReport {
    /// Human-readable summary table.
    pub fn summary_table(&self) -> String {
        let fmt_opt = |value: Option<f64>| match value {
            Some(v) => format!("{v:.6} s"),
            None => "n/a".to_string(),
        };
        let check = |ok: bool| if ok { "PASS" } else { "FAIL" };
        let mut out = String::new();
        out.push_str("== run summary ==============================================\n");
        out.push_str(&format!("run directory   {}\n", self.run_dir.display()));
        out.push_str(&format!(
            "attempts        {} (sent {}, send failures {})\n",
            self.attempts,
            self.loss.sent,
            self.attempts - self.loss.sent
        ));
        out.push_str(&format!(
            "sent            mqtt {}, coap {}\n",
            self.loss.sent_by_protocol.mqtt, self.loss.sent_by_protocol.coap
        ));
        out.push_str(&format!(
            "stored          {} (mqtt {}, coap {})\n",
            self.loss.stored, self.loss.stored_by_protocol.mqtt, self.loss.stored_by_protocol.coap
        ));
        out.push_str(&format!(
            "lost            {} (mqtt {}, coap {})\n",
            self.loss.lost, self.loss.lost_by_protocol.mqtt, self.loss.lost_by_protocol.coap
        ));
        out.push_str(&format!(
            "distribution    mqtt {:.1}% / coap {:.1}%\n",
            self.distribution.mqtt_pct, self.distribution.coap_pct
        ));
        out.push_str(&format!(
            "coap sec_diff   median {}, spread {}\n",
            fmt_opt(self.coap_median_s),
            fmt_opt(self.coap_spread_s)
        ));
        out.push_str(&format!(
            "mqtt sec_diff   median {}\n",
            fmt_opt(self.mqtt_median_s)
        ));
        out.push_str(&format!(
            "thresholds      stored {}  share {}  coap-profile {}  mqtt-median {}\n",
            check(self.outcome.stored_ok),
            check(self.outcome.share_ok),
            check(self.outcome.coap_profile_ok),
            check(self.outcome.mqtt_median_ok)
        ));
        out.push_str(&format!("result          {}\n", check(self.outcome.pass())));
        out
    }
}
