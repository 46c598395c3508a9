//! Post-run analysis: travel-time series, received-message distribution,
//! loss accounting against the send log, and SVG rendering of the result
//! figures.
//!
//! Windows are anchored to the newest reading, not the wall clock, so
//! every analysis is reproducible from persisted data after the run ends.

pub mod report;
pub mod svg;

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::model::{Protocol, StoredReading, Timestamp};
use crate::simulator::{SendLog, SendOutcome};

pub use report::write_run_reports;
pub use svg::{render_distribution_svg, render_travel_time_svg};

/// One plotted travel-time sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TravelPoint {
    pub inserted_ts: Timestamp,
    pub protocol: Protocol,
    pub sec_diff: f64,
}

/// Readings inside the inclusive window `[newest - window_s, newest]`,
/// ascending by insertion time.
pub fn travel_time_rows(readings: &[StoredReading], window_s: u64) -> Vec<TravelPoint> {
    let Some(newest) = readings.iter().map(|r| r.inserted_ts).max() else {
        return Vec::new();
    };
    let from = Timestamp::from_micros(newest.micros() - window_s as i64 * 1_000_000);
    let mut rows: Vec<&StoredReading> = readings.iter().filter(|r| r.inserted_ts >= from).collect();
    rows.sort_by(|a, b| {
        a.inserted_ts
            .cmp(&b.inserted_ts)
            .then_with(|| a.id.cmp(&b.id))
    });
    rows.into_iter()
        .map(|r| TravelPoint {
            inserted_ts: r.inserted_ts,
            protocol: r.protocol,
            sec_diff: r.sec_diff,
        })
        .collect()
}

/// CSV form of the travel-time series: `inserted_ts,protocol,sec_diff`,
/// sec_diff at fixed six-decimal (microsecond) resolution.
pub fn travel_time_csv(readings: &[StoredReading], window_s: u64) -> String {
    let mut out = String::from("inserted_ts,protocol,sec_diff\n");
    for point in travel_time_rows(readings, window_s) {
        out.push_str(&format!(
            "{},{},{:.6}\n",
            point.inserted_ts, point.protocol, point.sec_diff
        ));
    }
    out
}

/// Per-protocol share of readings received in a window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionSummary {
    pub mqtt: u64,
    pub coap: u64,
    pub mqtt_pct: f64,
    pub coap_pct: f64,
    /// True when the window holds no readings at all (percentages are 0/0).
    pub empty: bool,
}

/// Counts readings per protocol in the window and derives percentages
/// rounded to one decimal (summing to 100.0 +/- 0.1 when nonempty).
pub fn distribution_summary(readings: &[StoredReading], window_s: u64) -> DistributionSummary {
    let rows = travel_time_rows(readings, window_s);
    let mqtt = rows.iter().filter(|p| p.protocol == Protocol::Mqtt).count() as u64;
    let coap = rows.len() as u64 - mqtt;
    summarize_counts(mqtt, coap)
}

/// Percentage arithmetic on already-known counts.
pub fn summarize_counts(mqtt: u64, coap: u64) -> DistributionSummary {
    let total = mqtt + coap;
    let pct = |count: u64| {
        if total == 0 {
            0.0
        } else {
            (count as f64 / total as f64 * 1000.0).round() / 10.0
        }
    };
    DistributionSummary {
        mqtt,
        coap,
        mqtt_pct: pct(mqtt),
        coap_pct: pct(coap),
        empty: total == 0,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PerProtocol {
    pub mqtt: u64,
    pub coap: u64,
}

/// Join of the send log with what actually reached the store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LossReport {
    pub sent: u64,
    pub stored: u64,
    pub lost: u64,
    pub lost_by_protocol: PerProtocol,
    pub sent_by_protocol: PerProtocol,
    pub stored_by_protocol: PerProtocol,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("readings mention devices absent from the send log: {devices:?}")]
pub struct RunMismatch {
    pub devices: Vec<String>,
}

/// Joins readings against the send log on `(device, seq)`, where seq rides
/// in the reading's `message` field as `seq-<k>`.
pub fn loss_report(
    send_log: &SendLog,
    readings: &[StoredReading],
) -> Result<LossReport, RunMismatch> {
    let log_devices: BTreeSet<&str> = send_log.entries.iter().map(|e| e.device.as_str()).collect();
    let foreign: Vec<String> = readings
        .iter()
        .filter(|r| !log_devices.contains(r.device.as_str()))
        .map(|r| r.device.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if !foreign.is_empty() {
        return Err(RunMismatch { devices: foreign });
    }

    let sent_keys: BTreeSet<(&str, u64)> = send_log
        .entries
        .iter()
        .filter(|e| e.outcome == SendOutcome::Sent)
        .map(|e| (e.device.as_str(), e.seq))
        .collect();

    let mut stored = PerProtocol::default();
    let mut seen: BTreeSet<(&str, u64)> = BTreeSet::new();
    for reading in readings {
        let Some(seq) = reading
            .message
            .strip_prefix("seq-")
            .and_then(|s| s.parse::<u64>().ok())
        else {
            continue;
        };
        let key = (reading.device.as_str(), seq);
        if sent_keys.contains(&key) && seen.insert(key) {
            match reading.protocol {
                Protocol::Mqtt => stored.mqtt += 1,
                Protocol::Coap => stored.coap += 1,
            }
        }
    }

    let sent = PerProtocol {
        mqtt: send_log.sent_count_for(Protocol::Mqtt) as u64,
        coap: send_log.sent_count_for(Protocol::Coap) as u64,
    };
    let lost = PerProtocol {
        mqtt: sent.mqtt.saturating_sub(stored.mqtt),
        coap: sent.coap.saturating_sub(stored.coap),
    };
    Ok(LossReport {
        sent: sent.mqtt + sent.coap,
        stored: stored.mqtt + stored.coap,
        lost: lost.mqtt + lost.coap,
        lost_by_protocol: lost,
        sent_by_protocol: sent,
        stored_by_protocol: stored,
    })
}
