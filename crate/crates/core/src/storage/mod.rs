//! Embedded time-partitioned reading store: a principal table and an
//! append-only readings table bucketed into fixed-width time chunks, with
//! an optional newline-delimited JSON durability log.
//!
//! Chunks are keyed by `floor(epoch_seconds(inserted_ts) / 60)`, so
//! windowed queries prune to the few chunks overlapping their range.

pub mod wal;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::RwLock;

use thiserror::Error;

use crate::model::{sec_diff_micros, IngestRecord, Protocol, StoredReading, Timestamp};
use wal::WalWriter;

pub use wal::{recover_readings, RecoverError};

/// Chunk width in microseconds (one minute).
pub const CHUNK_WIDTH_US: i64 = 60_000_000;

/// Query shape shared by the HTTP read path and the store.
///
/// `since`/`until` bound `inserted_ts` as a half-open `[since, until)`
/// interval; `limit` caps the newest-first result set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadingsFilter {
    pub protocol: Option<Protocol>,
    pub since: Option<Timestamp>,
    pub until: Option<Timestamp>,
    pub limit: usize,
}

pub const DEFAULT_LIMIT: usize = 100;
pub const MAX_LIMIT: usize = 10_000;

impl Default for ReadingsFilter {
    fn default() -> Self {
        ReadingsFilter {
            protocol: None,
            since: None,
            until: None,
            limit: DEFAULT_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FilterError {
    #[error("limit must be within 1..={MAX_LIMIT}")]
    BadLimit,
    #[error("since must be earlier than until")]
    EmptyRange,
}

impl ReadingsFilter {
    pub fn validate(&self) -> Result<(), FilterError> {
        if self.limit == 0 || self.limit > MAX_LIMIT {
            return Err(FilterError::BadLimit);
        }
        if let (Some(since), Some(until)) = (self.since, self.until) {
            if since >= until {
                return Err(FilterError::EmptyRange);
            }
        }
        Ok(())
    }

    fn accepts(&self, reading: &StoredReading) -> bool {
        if self.protocol.is_some_and(|p| p != reading.protocol) {
            return false;
        }
        if self.since.is_some_and(|s| reading.inserted_ts < s) {
            return false;
        }
        if self.until.is_some_and(|u| reading.inserted_ts >= u) {
            return false;
        }
        true
    }
}

/// Readings per protocol for a time range.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProtocolCounts {
    pub mqtt: u64,
    pub coap: u64,
}

impl ProtocolCounts {
    pub fn total(&self) -> u64 {
        self.mqtt + self.coap
    }
}

#[derive(Debug, Error)]
pub enum StorageError {
    #[error("storage unavailable: {0}")]
    Unavailable(#[from] std::io::Error),
}

/// One row of the principal table (devices and gateways).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrincipalRow {
    pub principal_id: u64,
    pub name: String,
    pub kind: String,
    pub token_hash: String,
    pub expires_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("an unexpired registration named {0:?} already exists")]
pub struct DuplicateName(pub String);

#[derive(Default)]
struct Inner {
    chunks: BTreeMap<i64, Vec<StoredReading>>,
    next_id: u64,
    last_inserted_us: i64,
    principals: Vec<PrincipalRow>,
    next_principal_id: u64,
    wal: Option<WalWriter>,
}

/// Thread-safe reading store. Insert assigns a strictly increasing,
/// gapless id sequence; queries see a consistent point-in-time view.
pub struct Store {
    inner: RwLock<Inner>,
}

impl Default for Store {
    fn default() -> Self {
        Store::new()
    }
}

fn bucket_of(inserted_us: i64) -> i64 {
    inserted_us.div_euclid(CHUNK_WIDTH_US)
}

impl Store {
    pub fn new() -> Store {
        Store {
            inner: RwLock::new(Inner {
                next_id: 1,
                next_principal_id: 1,
                last_inserted_us: i64::MIN,
                ..Inner::default()
            }),
        }
    }

    /// A store that appends every accepted reading to an NDJSON log before
    /// acknowledging the insert.
    pub fn with_wal(path: &Path) -> Result<Store, StorageError> {
        let store = Store::new();
        store.inner.write().unwrap().wal = Some(WalWriter::create(path)?);
        Ok(store)
    }

    /// Rebuilds a store (without a live log) by replaying an NDJSON log.
    pub fn recover(path: &Path) -> Result<Store, RecoverError> {
        let readings = recover_readings(path)?;
        let store = Store::new();
        {
            let mut inner = store.inner.write().unwrap();
            for reading in readings {
                inner.next_id = inner.next_id.max(reading.id + 1);
                inner.last_inserted_us = inner.last_inserted_us.max(reading.inserted_ts.micros());
                inner
                    .chunks
                    .entry(bucket_of(reading.inserted_ts.micros()))
                    .or_default()
                    .push(reading);
            }
        }
        Ok(store)
    }

    /// Persists one reading. `inserted_ts` is clamped to be monotonically
    /// non-decreasing in id order, and `sec_diff` is computed from the
    /// final value.
    pub fn insert(
        &self,
        record: &IngestRecord,
        inserted_ts: Timestamp,
    ) -> Result<StoredReading, StorageError> {
        let mut inner = self.inner.write().unwrap();
        let inserted_us = inserted_ts.micros().max(inner.last_inserted_us);
        let inserted_ts = Timestamp::from_micros(inserted_us);
        let reading = StoredReading {
            id: inner.next_id,
            device: record.device.clone(),
            protocol: record.protocol,
            message: record.message.clone(),
            origin_ts: record.origin_ts,
            inserted_ts,
            sec_diff: sec_diff_micros(record.origin_ts, inserted_ts) as f64 / 1e6,
        };
        // Log before acknowledging; a failed append leaves memory (and the
        // id sequence) untouched.
        if let Some(wal) = inner.wal.as_mut() {
            wal.append(&reading)?;
        }
        inner.next_id += 1;
        inner.last_inserted_us = inserted_us;
        inner
            .chunks
            .entry(bucket_of(inserted_us))
            .or_default()
            .push(reading.clone());
        Ok(reading)
    }

    /// Newest-first readings matching `filter`, scanning only chunks that
    /// overlap its time range.
    pub fn query(&self, filter: &ReadingsFilter) -> Vec<StoredReading> {
        let inner = self.inner.read().unwrap();
        let low = filter.since.map_or(i64::MIN, |s| bucket_of(s.micros()));
        let high = filter
            .until
            .map_or(i64::MAX, |u| bucket_of(u.micros().saturating_sub(1)));

        let mut matches: Vec<&StoredReading> = inner
            .chunks
            .range(low..=high)
            .flat_map(|(_, rows)| rows.iter())
            .filter(|r| filter.accepts(r))
            .collect();
        matches.sort_by(|a, b| {
            b.inserted_ts
                .cmp(&a.inserted_ts)
                .then_with(|| b.id.cmp(&a.id))
        });
        matches.truncate(filter.limit);
        matches.into_iter().cloned().collect()
    }

    /// Per-protocol counts over half-open `[since, until)`, with no limit.
    pub fn count_by_protocol(&self, since: Timestamp, until: Timestamp) -> ProtocolCounts {
        let inner = self.inner.read().unwrap();
        let mut counts = ProtocolCounts::default();
        for (_, rows) in inner
            .chunks
            .range(bucket_of(since.micros())..=bucket_of(until.micros().saturating_sub(1)))
        {
            for reading in rows {
                if reading.inserted_ts >= since && reading.inserted_ts < until {
                    match reading.protocol {
                        Protocol::Mqtt => counts.mqtt += 1,
                        Protocol::Coap => counts.coap += 1,
                    }
                }
            }
        }
        counts
    }

    /// All readings in id order.
    pub fn all_readings(&self) -> Vec<StoredReading> {
        let inner = self.inner.read().unwrap();
        let mut rows: Vec<StoredReading> = inner
            .chunks
            .values()
            .flat_map(|rows| rows.iter().cloned())
            .collect();
        rows.sort_by_key(|r| r.id);
        rows
    }

    pub fn len(&self) -> usize {
        self.inner
            .read()
            .unwrap()
            .chunks
            .values()
            .map(Vec::len)
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Insertion timestamp of the newest reading.
    pub fn newest_inserted(&self) -> Option<Timestamp> {
        let inner = self.inner.read().unwrap();
        if inner.chunks.is_empty() {
            None
        } else {
            Some(Timestamp::from_micros(inner.last_inserted_us))
        }
    }

    pub fn chunk_count(&self) -> usize {
        self.inner.read().unwrap().chunks.len()
    }

    /// Registers a principal unless an unexpired registration with the
    /// same name exists.
    pub fn register_principal(
        &self,
        name: &str,
        kind: &str,
        token_hash: String,
        expires_at: Timestamp,
        now: Timestamp,
    ) -> Result<PrincipalRow, DuplicateName> {
        let mut inner = self.inner.write().unwrap();
        if inner
            .principals
            .iter()
            .any(|p| p.name == name && p.expires_at > now)
        {
            return Err(DuplicateName(name.to_string()));
        }
        let row = PrincipalRow {
            principal_id: inner.next_principal_id,
            name: name.to_string(),
            kind: kind.to_string(),
            token_hash,
            expires_at,
        };
        inner.next_principal_id += 1;
        inner.principals.push(row.clone());
        Ok(row)
    }

    /// Principal owning `token_hash`, if any (expiry is the caller's check).
    pub fn principal_by_token_hash(&self, token_hash: &str) -> Option<PrincipalRow> {
        self.inner
            .read()
            .unwrap()
            .principals
            .iter()
            .rev()
            .find(|p| p.token_hash == token_hash)
            .cloned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn record(device: &str, protocol: Protocol, origin_us: i64) -> IngestRecord {
        IngestRecord {
            device: device.to_string(),
            protocol,
            message: "m".to_string(),
            origin_ts: Timestamp::from_micros(origin_us),
        }
    }

    fn ts(us: i64) -> Timestamp {
        Timestamp::from_micros(us)
    }

    #[test]
    fn first_insert_gets_id_one() {
        let store = Store::new();
        let reading = store
            .insert(&record("d", Protocol::Mqtt, 0), ts(1_000))
            .unwrap();
        assert_eq!(reading.id, 1);
        assert_eq!(reading.sec_diff, 0.001);
    }

    #[test]
    fn inserts_a_minute_apart_land_in_distinct_chunks() {
        let store = Store::new();
        store
            .insert(&record("d", Protocol::Mqtt, 0), ts(0))
            .unwrap();
        store
            .insert(&record("d", Protocol::Mqtt, 0), ts(61_000_000))
            .unwrap();
        assert_eq!(store.chunk_count(), 2);
    }

    #[test]
    fn inserted_ts_is_clamped_monotonic() {
        let store = Store::new();
        store
            .insert(&record("d", Protocol::Mqtt, 0), ts(5_000))
            .unwrap();
        let second = store
            .insert(&record("d", Protocol::Mqtt, 0), ts(4_000))
            .unwrap();
        assert_eq!(second.inserted_ts, ts(5_000));
        assert_eq!(second.sec_diff, 0.005);
    }

    #[test]
    fn concurrent_inserts_assign_gapless_ids() {
        let store = Arc::new(Store::new());
        let mut handles = Vec::new();
        for t in 0..8 {
            let store = store.clone();
            handles.push(std::thread::spawn(move || {
                for i in 0..125 {
                    store
                        .insert(&record("d", Protocol::Mqtt, 0), ts((t * 1000 + i) as i64))
                        .unwrap();
                }
            }));
        }
        for handle in handles {
            handle.join().unwrap();
        }
        let mut ids: Vec<u64> = store.all_readings().iter().map(|r| r.id).collect();
        ids.sort_unstable();
        assert_eq!(ids, (1..=1000).collect::<Vec<u64>>());

        // inserted_ts non-decreasing in id order.
        let rows = store.all_readings();
        assert!(rows
            .windows(2)
            .all(|w| w[0].inserted_ts <= w[1].inserted_ts));
    }

    #[test]
    fn count_matches_query_totals() {
        let store = Store::new();
        for i in 0..3 {
            store
                .insert(&record("m", Protocol::Mqtt, 0), ts(i * 1000))
                .unwrap();
        }
        for i in 0..2 {
            store
                .insert(&record("c", Protocol::Coap, 0), ts(10_000 + i * 1000))
                .unwrap();
        }
        let counts = store.count_by_protocol(ts(0), ts(1_000_000));
        assert_eq!(counts, ProtocolCounts { mqtt: 3, coap: 2 });
        assert_eq!(store.count_by_protocol(ts(500), ts(400)).total(), 0);
    }

    #[test]
    fn filter_validation_rules() {
        let mut filter = ReadingsFilter::default();
        filter.validate().unwrap();
        filter.limit = 0;
        assert_eq!(filter.validate(), Err(FilterError::BadLimit));
        filter.limit = MAX_LIMIT + 1;
        assert_eq!(filter.validate(), Err(FilterError::BadLimit));

        let filter = ReadingsFilter {
            since: Some(ts(10)),
            until: Some(ts(10)),
            ..ReadingsFilter::default()
        };
        assert_eq!(filter.validate(), Err(FilterError::EmptyRange));
    }

    /// Brute-force reference: filter every reading, newest first, cap at
    /// limit. Deliberately ignores the chunk layout.
    fn full_scan_oracle(rows: &[StoredReading], filter: &ReadingsFilter) -> Vec<StoredReading> {
        let mut out: Vec<StoredReading> = rows
            .iter()
            .filter(|r| {
                filter.protocol.is_none_or(|p| p == r.protocol)
                    && filter.since.is_none_or(|s| r.inserted_ts >= s)
                    && filter.until.is_none_or(|u| r.inserted_ts < u)
            })
            .cloned()
            .collect();
        out.sort_by(|a, b| {
            b.inserted_ts
                .cmp(&a.inserted_ts)
                .then_with(|| b.id.cmp(&a.id))
        });
        out.truncate(filter.limit);
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn query_equals_full_scan(
            inserts in proptest::collection::vec(
                (prop_oneof![Just(Protocol::Mqtt), Just(Protocol::Coap)], 0i64..400_000_000),
                0..120,
            ),
            since in proptest::option::of(0i64..400_000_000),
            window in 1i64..200_000_000,
            protocol in proptest::option::of(prop_oneof![Just(Protocol::Mqtt), Just(Protocol::Coap)]),
            limit in 1usize..40,
        ) {
            let store = Store::new();
            for (protocol, at) in &inserts {
                store.insert(&record("d", *protocol, 0), ts(*at)).unwrap();
            }
            let filter = ReadingsFilter {
                protocol,
                since: since.map(ts),
                until: since.map(|s| ts(s + window)),
                limit,
            };
            let got = store.query(&filter);
            let want = full_scan_oracle(&store.all_readings(), &filter);
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn duplicate_principal_names_rejected_until_expiry() {
        let store = Store::new();
        let now = ts(0);
        store
            .register_principal("gw", "gateway", "h1".into(), ts(100), now)
            .unwrap();
        assert_eq!(
            store.register_principal("gw", "gateway", "h2".into(), ts(100), now),
            Err(DuplicateName("gw".into()))
        );
        // After expiry the name is free again.
        let row = store
            .register_principal("gw", "gateway", "h3".into(), ts(300), ts(200))
            .unwrap();
        assert_eq!(row.principal_id, 2);
        // Newest registration wins token lookup.
        assert_eq!(store.principal_by_token_hash("h3").unwrap().principal_id, 2);
    }
}
