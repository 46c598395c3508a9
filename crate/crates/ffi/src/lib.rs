//! C ABI for the hetbridge building blocks that make sense to call from
//! other languages: the canonical record schema and timestamp handling,
//! the device-side MQTT/CoAP encoders, topic matching, and the embedded
//! reading store behind an opaque handle.
//!
//! Conventions: every fallible function returns an [`HbStatus`]; strings
//! are NUL-terminated UTF-8; output strings are allocated by this library
//! and must be released with [`hb_string_free`].

use std::ffi::{c_char, CStr, CString};
use std::ptr;

use hetbridge::coap::{encode_coap, CoapCode, CoapMessage, CoapType, CONTENT_FORMAT_JSON};
use hetbridge::model::{compute_sec_diff, parse_ingest_record, IngestRecord, Protocol, Timestamp};
use hetbridge::mqtt::{
    decode_remaining_length, encode_packet, encode_remaining_length, topic_matches, MqttPacket,
};
use hetbridge::storage::{ReadingsFilter, Store};

/// Result codes shared by every fallible function in this ABI.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HbStatus {
    HbOk = 0,
    /// A required pointer argument was NULL.
    HbNullArgument = 1,
    /// A string argument was not valid UTF-8.
    HbInvalidUtf8 = 2,
    /// The input failed validation (schema, timestamp, filter, range).
    HbInvalidInput = 3,
    /// The provided buffer is too small; nothing was written.
    HbBufferTooSmall = 4,
    /// The store rejected the operation.
    HbStorageError = 5,
}

fn cstr_arg<'a>(ptr: *const c_char) -> Result<&'a str, HbStatus> {
    if ptr.is_null() {
        return Err(HbStatus::HbNullArgument);
    }
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| HbStatus::HbInvalidUtf8)
}

fn write_bytes(bytes: &[u8], buf: *mut u8, cap: usize, written: *mut usize) -> HbStatus {
    if buf.is_null() || written.is_null() {
        return HbStatus::HbNullArgument;
    }
    if bytes.len() > cap {
        return HbStatus::HbBufferTooSmall;
    }
    unsafe {
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
        *written = bytes.len();
    }
    HbStatus::HbOk
}

fn export_string(text: String, out: *mut *mut c_char) -> HbStatus {
    if out.is_null() {
        return HbStatus::HbNullArgument;
    }
    match CString::new(text) {
        Ok(cstring) => {
            unsafe { *out = cstring.into_raw() };
            HbStatus::HbOk
        }
        Err(_) => HbStatus::HbInvalidInput,
    }
}

/// Releases a string previously returned through an `out` parameter.
///
/// # Safety
/// `ptr` must be NULL or a pointer obtained from this library's string
/// outputs, not yet freed. Anything else is undefined behavior.
#[no_mangle]
pub unsafe extern "C" fn hb_string_free(ptr: *mut c_char) {
    if !ptr.is_null() {
        drop(unsafe { CString::from_raw(ptr) });
    }
}

/// Parses a canonical timestamp (`YYYY-MM-DDTHH:MM:SS.ffffffZ`) into
/// microseconds since the Unix epoch.
///
/// # Safety
/// `text` must be a valid NUL-terminated string; `out_micros` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hb_timestamp_parse(text: *const c_char, out_micros: *mut i64) -> HbStatus {
    if out_micros.is_null() {
        return HbStatus::HbNullArgument;
    }
    let text = match cstr_arg(text) {
        Ok(text) => text,
        Err(status) => return status,
    };
    match Timestamp::parse(text) {
        Ok(ts) => {
            unsafe { *out_micros = ts.micros() };
            HbStatus::HbOk
        }
        Err(_) => HbStatus::HbInvalidInput,
    }
}

/// Formats microseconds since the epoch as the canonical 27-character
/// timestamp. `buf` needs at least 28 bytes (text plus NUL).
///
/// # Safety
/// `buf` must point to at least `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn hb_timestamp_format(
    micros: i64,
    buf: *mut c_char,
    cap: usize,
) -> HbStatus {
    if buf.is_null() {
        return HbStatus::HbNullArgument;
    }
    let text = Timestamp::from_micros(micros).to_string();
    let bytes = text.as_bytes();
    if bytes.len() + 1 > cap {
        return HbStatus::HbBufferTooSmall;
    }
    unsafe {
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast(), bytes.len());
        *buf.add(bytes.len()) = 0;
    }
    HbStatus::HbOk
}

/// Travel time `inserted - origin` in seconds at microsecond resolution.
#[no_mangle]
pub extern "C" fn hb_sec_diff(origin_micros: i64, inserted_micros: i64) -> f64 {
    compute_sec_diff(
        Timestamp::from_micros(origin_micros),
        Timestamp::from_micros(inserted_micros),
    )
}

/// Validates an ingestion JSON body and returns its canonical form.
///
/// # Safety
/// `json` must be a valid NUL-terminated string; `out_canonical` must be a
/// valid pointer. The result must be freed with [`hb_string_free`].
#[no_mangle]
pub unsafe extern "C" fn hb_ingest_record_canonicalize(
    json: *const c_char,
    out_canonical: *mut *mut c_char,
) -> HbStatus {
    let json = match cstr_arg(json) {
        Ok(json) => json,
        Err(status) => return status,
    };
    match parse_ingest_record(json) {
        Ok(record) => export_string(record.to_json(), out_canonical),
        Err(_) => HbStatus::HbInvalidInput,
    }
}

/// Encodes `n` as the MQTT base-128 remaining-length varint (1..=4 bytes).
///
/// # Safety
/// `buf` must point to at least `cap` writable bytes; `written` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hb_mqtt_remaining_length_encode(
    n: u32,
    buf: *mut u8,
    cap: usize,
    written: *mut usize,
) -> HbStatus {
    match encode_remaining_length(n) {
        Ok(bytes) => write_bytes(&bytes, buf, cap, written),
        Err(_) => HbStatus::HbInvalidInput,
    }
}

/// Decodes an MQTT remaining-length varint, reporting the value and the
/// number of bytes consumed.
///
/// # Safety
/// `buf` must point to at least `len` readable bytes; `value` and
/// `consumed` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn hb_mqtt_remaining_length_decode(
    buf: *const u8,
    len: usize,
    value: *mut u32,
    consumed: *mut usize,
) -> HbStatus {
    if buf.is_null() || value.is_null() || consumed.is_null() {
        return HbStatus::HbNullArgument;
    }
    let bytes = unsafe { std::slice::from_raw_parts(buf, len) };
    match decode_remaining_length(bytes) {
        Ok((n, used)) => {
            unsafe {
                *value = n;
                *consumed = used;
            }
            HbStatus::HbOk
        }
        Err(_) => HbStatus::HbInvalidInput,
    }
}

/// Evaluates an MQTT topic filter (`+`/`#` wildcards) against a topic.
///
/// # Safety
/// `filter` and `topic` must be valid NUL-terminated strings; `matches`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hb_mqtt_topic_matches(
    filter: *const c_char,
    topic: *const c_char,
    matches: *mut bool,
) -> HbStatus {
    if matches.is_null() {
        return HbStatus::HbNullArgument;
    }
    let (filter, topic) = match (cstr_arg(filter), cstr_arg(topic)) {
        (Ok(filter), Ok(topic)) => (filter, topic),
        (Err(status), _) | (_, Err(status)) => return status,
    };
    match topic_matches(filter, topic) {
        Ok(result) => {
            unsafe { *matches = result };
            HbStatus::HbOk
        }
        Err(_) => HbStatus::HbInvalidInput,
    }
}

/// Builds a complete MQTT 3.1.1 PUBLISH packet (QoS 0 or 1) ready to write
/// to the broker connection. QoS 1 requires a nonzero `packet_id`.
///
/// # Safety
/// `topic` must be a valid NUL-terminated string; `payload` must point to
/// `payload_len` readable bytes; `buf` must point to `cap` writable bytes;
/// `written` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hb_mqtt_encode_publish(
    topic: *const c_char,
    payload: *const u8,
    payload_len: usize,
    qos: u8,
    packet_id: u16,
    buf: *mut u8,
    cap: usize,
    written: *mut usize,
) -> HbStatus {
    let topic = match cstr_arg(topic) {
        Ok(topic) => topic,
        Err(status) => return status,
    };
    if payload.is_null() && payload_len > 0 {
        return HbStatus::HbNullArgument;
    }
    let payload = if payload_len == 0 {
        &[]
    } else {
        unsafe { std::slice::from_raw_parts(payload, payload_len) }
    };
    let packet = MqttPacket::Publish {
        dup: false,
        qos,
        retain: false,
        topic: topic.to_string(),
        packet_id: (qos == 1).then_some(packet_id),
        payload: payload.to_vec(),
    };
    match encode_packet(&packet) {
        Ok(bytes) => write_bytes(&bytes, buf, cap, written),
        Err(_) => HbStatus::HbInvalidInput,
    }
}

/// Builds a CoAP NON POST datagram carrying a JSON payload, the message
/// devices send to the gateway's ingest resource.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `token` must point to
/// `token_len` readable bytes (`token_len <= 8`); `payload` must point to
/// `payload_len` readable bytes; `buf`/`written` as above.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn hb_coap_encode_post(
    path: *const c_char,
    message_id: u16,
    token: *const u8,
    token_len: usize,
    payload: *const u8,
    payload_len: usize,
    buf: *mut u8,
    cap: usize,
    written: *mut usize,
) -> HbStatus {
    let path = match cstr_arg(path) {
        Ok(path) => path,
        Err(status) => return status,
    };
    if (token.is_null() && token_len > 0) || (payload.is_null() && payload_len > 0) {
        return HbStatus::HbNullArgument;
    }
    if token_len > 8 {
        return HbStatus::HbInvalidInput;
    }
    let token = if token_len == 0 {
        Vec::new()
    } else {
        unsafe { std::slice::from_raw_parts(token, token_len) }.to_vec()
    };
    let payload = if payload_len == 0 {
        Vec::new()
    } else {
        unsafe { std::slice::from_raw_parts(payload, payload_len) }.to_vec()
    };
    let message = CoapMessage::new(CoapType::Non, CoapCode::POST, message_id)
        .with_token(token)
        .with_path(path)
        .with_payload(payload, Some(CONTENT_FORMAT_JSON));
    match encode_coap(&message) {
        Ok(bytes) => write_bytes(&bytes, buf, cap, written),
        Err(_) => HbStatus::HbInvalidInput,
    }
}

/// Opaque reading store handle.
pub struct HbStore {
    store: Store,
}

/// Creates an in-memory reading store. Free with [`hb_store_free`].
#[no_mangle]
pub extern "C" fn hb_store_new() -> *mut HbStore {
    Box::into_raw(Box::new(HbStore {
        store: Store::new(),
    }))
}

/// Releases a store handle.
///
/// # Safety
/// `store` must be NULL or a pointer from [`hb_store_new`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hb_store_free(store: *mut HbStore) {
    if !store.is_null() {
        drop(unsafe { Box::from_raw(store) });
    }
}

/// Inserts one reading. `protocol` is `"mqtt"` or `"coap"`; the insertion
/// timestamp is stamped from the wall clock; the assigned id is returned
/// through `out_id`.
///
/// # Safety
/// `store` must be a live handle; string arguments must be valid
/// NUL-terminated strings; `out_id` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hb_store_insert(
    store: *mut HbStore,
    device: *const c_char,
    protocol: *const c_char,
    message: *const c_char,
    origin_micros: i64,
    out_id: *mut u64,
) -> HbStatus {
    if store.is_null() || out_id.is_null() {
        return HbStatus::HbNullArgument;
    }
    let (device, protocol, message) =
        match (cstr_arg(device), cstr_arg(protocol), cstr_arg(message)) {
            (Ok(device), Ok(protocol), Ok(message)) => (device, protocol, message),
            (Err(status), _, _) | (_, Err(status), _) | (_, _, Err(status)) => return status,
        };
    let Ok(protocol) = protocol.parse::<Protocol>() else {
        return HbStatus::HbInvalidInput;
    };
    if !hetbridge::model::valid_device_id(device) {
        return HbStatus::HbInvalidInput;
    }
    let record = IngestRecord {
        device: device.to_string(),
        protocol,
        message: message.to_string(),
        origin_ts: Timestamp::from_micros(origin_micros),
    };
    let store = unsafe { &(*store).store };
    match store.insert(&record, Timestamp::now()) {
        Ok(reading) => {
            unsafe { *out_id = reading.id };
            HbStatus::HbOk
        }
        Err(_) => HbStatus::HbStorageError,
    }
}

/// Number of stored readings.
///
/// # Safety
/// `store` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hb_store_len(store: *const HbStore) -> usize {
    if store.is_null() {
        return 0;
    }
    unsafe { &(*store).store }.len()
}

/// Per-protocol counts over the half-open interval `[since, until)` in
/// microseconds since the epoch.
///
/// # Safety
/// `store` must be a live handle; `mqtt_count` and `coap_count` must be
/// valid pointers.
#[no_mangle]
pub unsafe extern "C" fn hb_store_count_by_protocol(
    store: *const HbStore,
    since_micros: i64,
    until_micros: i64,
    mqtt_count: *mut u64,
    coap_count: *mut u64,
) -> HbStatus {
    if store.is_null() || mqtt_count.is_null() || coap_count.is_null() {
        return HbStatus::HbNullArgument;
    }
    if since_micros >= until_micros {
        return HbStatus::HbInvalidInput;
    }
    let counts = unsafe { &(*store).store }.count_by_protocol(
        Timestamp::from_micros(since_micros),
        Timestamp::from_micros(until_micros),
    );
    unsafe {
        *mqtt_count = counts.mqtt;
        *coap_count = counts.coap;
    }
    HbStatus::HbOk
}

/// Queries readings (newest first, up to `limit`, optionally filtered to
/// one protocol) and returns them as a JSON array.
///
/// # Safety
/// `store` must be a live handle; `protocol` must be NULL or a valid
/// NUL-terminated string; `out_json` must be a valid pointer. The result
/// must be freed with [`hb_string_free`].
#[no_mangle]
pub unsafe extern "C" fn hb_store_query_json(
    store: *const HbStore,
    protocol: *const c_char,
    limit: usize,
    out_json: *mut *mut c_char,
) -> HbStatus {
    if store.is_null() {
        return HbStatus::HbNullArgument;
    }
    let protocol = if protocol.is_null() {
        None
    } else {
        match cstr_arg(protocol) {
            Ok(text) => match text.parse::<Protocol>() {
                Ok(protocol) => Some(protocol),
                Err(_) => return HbStatus::HbInvalidInput,
            },
            Err(status) => return status,
        }
    };
    let filter = ReadingsFilter {
        protocol,
        since: None,
        until: None,
        limit,
    };
    if filter.validate().is_err() {
        return HbStatus::HbInvalidInput;
    }
    let rows = unsafe { &(*store).store }.query(&filter);
    let json = serde_json::to_string(&rows).expect("readings serialize");
    export_string(json, out_json)
}
