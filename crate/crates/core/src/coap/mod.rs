//! Minimal RFC 7252 CoAP implementation over UDP: message codec, client
//! with CON retransmission / NON fire-once semantics, and a server with
//! path dispatch and duplicate detection.
//!
//! Out of scope: Observe, blockwise transfer, DTLS, multicast, proxying.

pub mod client;
pub mod codec;
pub mod server;

pub use client::{coap_request, CoapClient, CoapRequestError, CoapTimings};
pub use codec::{
    decode_coap, encode_coap, CoapCode, CoapCodecError, CoapMessage, CoapType, CONTENT_FORMAT_JSON,
    OPTION_CONTENT_FORMAT, OPTION_URI_PATH, OPTION_URI_QUERY,
};
pub use server::{CoapRequest, CoapResponse, CoapServer, Resources};
