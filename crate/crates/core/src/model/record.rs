use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::protocol::Protocol;
use super::timestamp::Timestamp;

/// Canonical normalized reading exchanged gateway -> middleware.
///
/// The JSON form has exactly the four keys `device`, `protocol`, `message`,
/// `origin_ts`; this is the wire contract for ingestion POST bodies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestRecord {
    pub device: String,
    pub protocol: Protocol,
    pub message: String,
    pub origin_ts: Timestamp,
}

impl IngestRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("record serialization cannot fail")
    }
}

/// An [`IngestRecord`] as persisted: server-assigned id, insertion
/// timestamp, and the travel time `sec_diff = inserted_ts - origin_ts`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredReading {
    pub id: u64,
    pub device: String,
    pub protocol: Protocol,
    pub message: String,
    pub origin_ts: Timestamp,
    pub inserted_ts: Timestamp,
    pub sec_diff: f64,
}

impl StoredReading {
    pub fn record(&self) -> IngestRecord {
        IngestRecord {
            device: self.device.clone(),
            protocol: self.protocol,
            message: self.message.clone(),
            origin_ts: self.origin_ts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordParseError {
    #[error("body is not a JSON object")]
    MalformedJson,
    #[error("missing field {0:?}")]
    MissingField(String),
    #[error("unexpected field {0:?}")]
    UnexpectedField(String),
    #[error("field {0:?} has the wrong type")]
    FieldType(String),
    #[error("device id must be 1..=64 chars from [a-z0-9-]")]
    InvalidDevice,
    #[error("protocol must be \"mqtt\" or \"coap\"")]
    InvalidProtocol,
    #[error("origin_ts is not a canonical timestamp")]
    InvalidTimestamp,
}

/// True iff `device` is a valid device id: nonempty, at most 64 chars,
/// drawn from `[a-z0-9-]`.
pub fn valid_device_id(device: &str) -> bool {
    !device.is_empty()
        && device.len() <= 64
        && device
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
}

/// Parses the canonical ingestion JSON into an [`IngestRecord`].
///
/// Accepts iff the body is a JSON object with exactly the four schema keys,
/// every field is well-typed, the device id is valid, and the timestamp is
/// canonical.
pub fn parse_ingest_record(text: &str) -> Result<IngestRecord, RecordParseError> {
    let value: Value = serde_json::from_str(text).map_err(|_| RecordParseError::MalformedJson)?;
    let obj = value.as_object().ok_or(RecordParseError::MalformedJson)?;

    const KEYS: [&str; 4] = ["device", "protocol", "message", "origin_ts"];
    for key in KEYS {
        if !obj.contains_key(key) {
            return Err(RecordParseError::MissingField(key.to_string()));
        }
    }
    for key in obj.keys() {
        if !KEYS.contains(&key.as_str()) {
            return Err(RecordParseError::UnexpectedField(key.clone()));
        }
    }

    let text_field = |key: &str| -> Result<&str, RecordParseError> {
        obj[key]
            .as_str()
            .ok_or_else(|| RecordParseError::FieldType(key.to_string()))
    };

    let device = text_field("device")?;
    if !valid_device_id(device) {
        return Err(RecordParseError::InvalidDevice);
    }
    let protocol: Protocol = text_field("protocol")?
        .parse()
        .map_err(|_| RecordParseError::InvalidProtocol)?;
    let message = text_field("message")?.to_string();
    let origin_ts = Timestamp::parse(text_field("origin_ts")?)
        .map_err(|_| RecordParseError::InvalidTimestamp)?;

    Ok(IngestRecord {
        device: device.to_string(),
        protocol,
        message,
        origin_ts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_well_formed_record() {
        let rec = parse_ingest_record(
            r#"{"device":"mqtt-1","protocol":"mqtt","message":"seq-0","origin_ts":"2024-03-01T12:00:00.000000Z"}"#,
        )
        .unwrap();
        assert_eq!(rec.device, "mqtt-1");
        assert_eq!(rec.protocol, Protocol::Mqtt);
        assert_eq!(rec.message, "seq-0");
        assert_eq!(rec.origin_ts.to_string(), "2024-03-01T12:00:00.000000Z");
    }

    #[test]
    fn rejects_unknown_protocol() {
        let err = parse_ingest_record(
            r#"{"device":"coap-1","protocol":"ftp","message":"m","origin_ts":"2024-03-01T12:00:00.000000Z"}"#,
        )
        .unwrap_err();
        assert_eq!(err, RecordParseError::InvalidProtocol);
    }

    #[test]
    fn rejects_missing_message() {
        let err = parse_ingest_record(
            r#"{"device":"x","protocol":"coap","origin_ts":"2024-03-01T12:00:00.000000Z"}"#,
        )
        .unwrap_err();
        assert_eq!(err, RecordParseError::MissingField("message".into()));
    }

    #[test]
    fn rejects_extra_keys_and_bad_types() {
        let err = parse_ingest_record(
            r#"{"device":"x","protocol":"coap","message":"m","origin_ts":"2024-03-01T12:00:00.000000Z","extra":1}"#,
        )
        .unwrap_err();
        assert_eq!(err, RecordParseError::UnexpectedField("extra".into()));

        let err = parse_ingest_record(
            r#"{"device":"x","protocol":"coap","message":7,"origin_ts":"2024-03-01T12:00:00.000000Z"}"#,
        )
        .unwrap_err();
        assert_eq!(err, RecordParseError::FieldType("message".into()));

        assert_eq!(
            parse_ingest_record("not json").unwrap_err(),
            RecordParseError::MalformedJson
        );
    }

    #[test]
    fn rejects_bad_device_ids() {
        for device in ["", "UPPER", "has space", "x".repeat(65).as_str()] {
            let body = format!(
                r#"{{"device":{device:?},"protocol":"mqtt","message":"m","origin_ts":"2024-03-01T12:00:00.000000Z"}}"#
            );
            assert_eq!(
                parse_ingest_record(&body).unwrap_err(),
                RecordParseError::InvalidDevice,
                "accepted device {device:?}"
            );
        }
    }

    prop_compose! {
        fn arb_record()(
            device in "[a-z0-9-]{1,64}",
            protocol in prop_oneof![Just(Protocol::Mqtt), Just(Protocol::Coap)],
            message in "[ -~]{0,80}",
            micros in 0i64..4_102_444_800_000_000, // up to year 2100
        ) -> IngestRecord {
            IngestRecord {
                device,
                protocol,
                message,
                origin_ts: Timestamp::from_micros(micros),
            }
        }
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(rec in arb_record()) {
            let parsed = parse_ingest_record(&rec.to_json()).unwrap();
            prop_assert_eq!(parsed, rec);
        }

        #[test]
        fn timestamp_text_round_trip(micros in 0i64..4_102_444_800_000_000) {
            let ts = Timestamp::from_micros(micros);
            let text = ts.to_string();
            prop_assert_eq!(Timestamp::parse(&text).unwrap(), ts);
            prop_assert_eq!(Timestamp::parse(&text).unwrap().to_string(), text);
        }
    }
}
