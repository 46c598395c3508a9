/* hetbridge C ABI: canonical records, device-side MQTT/CoAP encoders, and the embedded reading store. */

#ifndef HETBRIDGE_H
#define HETBRIDGE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes shared by every fallible function in this ABI.
typedef enum HbStatus {
  HbOk = 0,
  // A required pointer argument was NULL.
  HbNullArgument = 1,
  // A string argument was not valid UTF-8.
  HbInvalidUtf8 = 2,
  // The input failed validation (schema, timestamp, filter, range).
  HbInvalidInput = 3,
  // The provided buffer is too small; nothing was written.
  HbBufferTooSmall = 4,
  // The store rejected the operation.
  HbStorageError = 5,
} HbStatus;

// Opaque reading store handle.
typedef struct HbStore HbStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Releases a string previously returned through an `out` parameter.
//
// # Safety
// `ptr` must be NULL or a pointer obtained from this library's string
// outputs, not yet freed. Anything else is undefined behavior.
void hb_string_free(char *ptr);

// Parses a canonical timestamp (`YYYY-MM-DDTHH:MM:SS.ffffffZ`) into
// microseconds since the Unix epoch.
//
// # Safety
// `text` must be a valid NUL-terminated string; `out_micros` must be a
// valid pointer.
enum HbStatus hb_timestamp_parse(const char *text, int64_t *out_micros);

// Formats microseconds since the epoch as the canonical 27-character
// timestamp. `buf` needs at least 28 bytes (text plus NUL).
//
// # Safety
// `buf` must point to at least `cap` writable bytes.
enum HbStatus hb_timestamp_format(int64_t micros, char *buf, size_t cap);

// Travel time `inserted - origin` in seconds at microsecond resolution.
double hb_sec_diff(int64_t origin_micros, int64_t inserted_micros);

// Validates an ingestion JSON body and returns its canonical form.
//
// # Safety
// `json` must be a valid NUL-terminated string; `out_canonical` must be a
// valid pointer. The result must be freed with [`hb_string_free`].
enum HbStatus hb_ingest_record_canonicalize(const char *json, char **out_canonical);

// Encodes `n` as the MQTT base-128 remaining-length varint (1..=4 bytes).
//
// # Safety
// `buf` must point to at least `cap` writable bytes; `written` must be a
// valid pointer.
enum HbStatus hb_mqtt_remaining_length_encode(uint32_t n,
                                              uint8_t *buf,
                                              size_t cap,
                                              size_t *written);

// Decodes an MQTT remaining-length varint, reporting the value and the
// number of bytes consumed.
//
// # Safety
// `buf` must point to at least `len` readable bytes; `value` and
// `consumed` must be valid pointers.
enum HbStatus hb_mqtt_remaining_length_decode(const uint8_t *buf,
                                              size_t len,
                                              uint32_t *value,
                                              size_t *consumed);

// Evaluates an MQTT topic filter (`+`/`#` wildcards) against a topic.
//
// # Safety
// `filter` and `topic` must be valid NUL-terminated strings; `matches`
// must be a valid pointer.
enum HbStatus hb_mqtt_topic_matches(const char *filter, const char *topic, bool *matches);

// Builds a complete MQTT 3.1.1 PUBLISH packet (QoS 0 or 1) ready to write
// to the broker connection. QoS 1 requires a nonzero `packet_id`.
//
// # Safety
// `topic` must be a valid NUL-terminated string; `payload` must point to
// `payload_len` readable bytes; `buf` must point to `cap` writable bytes;
// `written` must be a valid pointer.
enum HbStatus hb_mqtt_encode_publish(const char *topic,
                                     const uint8_t *payload,
                                     size_t payload_len,
                                     uint8_t qos,
                                     uint16_t packet_id,
                                     uint8_t *buf,
                                     size_t cap,
                                     size_t *written);

// Builds a CoAP NON POST datagram carrying a JSON payload, the message
// devices send to the gateway's ingest resource.
//
// # Safety
// `path` must be a valid NUL-terminated string; `token` must point to
// `token_len` readable bytes (`token_len <= 8`); `payload` must point to
// `payload_len` readable bytes; `buf`/`written` as above.
enum HbStatus hb_coap_encode_post(const char *path,
                                  uint16_t message_id,
                                  const uint8_t *token,
                                  size_t token_len,
                                  const uint8_t *payload,
                                  size_t payload_len,
                                  uint8_t *buf,
                                  size_t cap,
                                  size_t *written);

// Creates an in-memory reading store. Free with [`hb_store_free`].
struct HbStore *hb_store_new(void);

// Releases a store handle.
//
// # Safety
// `store` must be NULL or a pointer from [`hb_store_new`], not yet freed.
void hb_store_free(struct HbStore *store);

// Inserts one reading. `protocol` is `"mqtt"` or `"coap"`; the insertion
// timestamp is stamped from the wall clock; the assigned id is returned
// through `out_id`.
//
// # Safety
// `store` must be a live handle; string arguments must be valid
// NUL-terminated strings; `out_id` must be a valid pointer.
enum HbStatus hb_store_insert(struct HbStore *store,
                              const char *device,
                              const char *protocol,
                              const char *message,
                              int64_t origin_micros,
                              uint64_t *out_id);

// Number of stored readings.
//
// # Safety
// `store` must be a live handle.
size_t hb_store_len(const struct HbStore *store);

// Per-protocol counts over the half-open interval `[since, until)` in
// microseconds since the epoch.
//
// # Safety
// `store` must be a live handle; `mqtt_count` and `coap_count` must be
// valid pointers.
enum HbStatus hb_store_count_by_protocol(const struct HbStore *store,
                                         int64_t since_micros,
                                         int64_t until_micros,
                                         uint64_t *mqtt_count,
                                         uint64_t *coap_count);

// Queries readings (newest first, up to `limit`, optionally filtered to
// one protocol) and returns them as a JSON array.
//
// # Safety
// `store` must be a live handle; `protocol` must be NULL or a valid
// NUL-terminated string; `out_json` must be a valid pointer. The result
// must be freed with [`hb_string_free`].
enum HbStatus hb_store_query_json(const struct HbStore *store,
                                  const char *protocol,
                                  size_t limit,
                                  char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HETBRIDGE_H */
