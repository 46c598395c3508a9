//! Shared domain types: protocol tags, microsecond timestamps, canonical
//! ingestion records, and fleet configuration. Every other module depends
//! only on this one.

pub mod fleet;
pub mod protocol;
pub mod record;
pub mod timestamp;

pub use fleet::{FleetConfig, FleetConfigError};
pub use protocol::{Protocol, ProtocolParseError};
pub use record::{
    parse_ingest_record, valid_device_id, IngestRecord, RecordParseError, StoredReading,
};
pub use timestamp::{compute_sec_diff, sec_diff_micros, Timestamp, TimestampError};
