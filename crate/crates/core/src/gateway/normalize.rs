//! Device-payload parsing and per-protocol normalization into canonical
//! ingestion records.
//!
//! Devices send `{"device": ..., "timestamp": ..., "message": ...}`; the
//! gateway renames `timestamp` to `origin_ts` and stamps the protocol it
//! received the message over.

use serde_json::Value;
use thiserror::Error;

use crate::model::{valid_device_id, IngestRecord, Protocol, Timestamp};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NormalizeError {
    #[error("malformed device payload: {0}")]
    MalformedPayload(&'static str),
    #[error("topic {0:?} does not follow iot/<device>/data")]
    BadTopic(String),
    #[error("device mismatch: topic says {topic_device:?}, payload says {payload_device:?}")]
    DeviceMismatch {
        topic_device: String,
        payload_device: String,
    },
}

struct DevicePayload {
    device: String,
    timestamp: Timestamp,
    message: String,
}

fn parse_device_payload(payload: &[u8]) -> Result<DevicePayload, NormalizeError> {
    let text = std::str::from_utf8(payload)
        .map_err(|_| NormalizeError::MalformedPayload("payload is not UTF-8"))?;
    let value: Value = serde_json::from_str(text)
        .map_err(|_| NormalizeError::MalformedPayload("payload is not JSON"))?;
    let obj = value.as_object().ok_or(NormalizeError::MalformedPayload(
        "payload is not a JSON object",
    ))?;

    let field = |key: &'static str, missing: &'static str| {
        obj.get(key)
            .and_then(Value::as_str)
            .ok_or(NormalizeError::MalformedPayload(missing))
    };
    let device = field("device", "missing string field \"device\"")?;
    if !valid_device_id(device) {
        return Err(NormalizeError::MalformedPayload("invalid device id"));
    }
    let timestamp = Timestamp::parse(field("timestamp", "missing string field \"timestamp\"")?)
        .map_err(|_| NormalizeError::MalformedPayload("timestamp is not canonical"))?;
    let message = field("message", "missing string field \"message\"")?;

    Ok(DevicePayload {
        device: device.to_string(),
        timestamp,
        message: message.to_string(),
    })
}

/// Normalizes a message that arrived on `iot/<device>/data`, cross-checking
/// the topic's device level against the payload.
pub fn normalize_mqtt(topic: &str, payload: &[u8]) -> Result<IngestRecord, NormalizeError> {
    let segments: Vec<&str> = topic.split('/').collect();
    let topic_device = match segments.as_slice() {
        [_, device, _] => *device,
        _ => return Err(NormalizeError::BadTopic(topic.to_string())),
    };
    let parsed = parse_device_payload(payload)?;
    if parsed.device != topic_device {
        return Err(NormalizeError::DeviceMismatch {
            topic_device: topic_device.to_string(),
            payload_device: parsed.device,
        });
    }
    Ok(IngestRecord {
        device: parsed.device,
        protocol: Protocol::Mqtt,
        message: parsed.message,
        origin_ts: parsed.timestamp,
    })
}

/// Normalizes a payload POSTed to the ingest resource. Routing has already
/// matched the path, so there is no identity cross-check beyond the schema.
pub fn normalize_coap(payload: &[u8]) -> Result<IngestRecord, NormalizeError> {
    let parsed = parse_device_payload(payload)?;
    Ok(IngestRecord {
        device: parsed.device,
        protocol: Protocol::Coap,
        message: parsed.message,
        origin_ts: parsed.timestamp,
    })
}
