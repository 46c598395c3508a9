//! CoAP client. Each request runs on its own ephemeral UDP socket, so
//! request contexts are independent and may run concurrently.

use std::time::Duration;

use rand::Rng;
use thiserror::Error;
use tokio::net::UdpSocket;
use tokio::time::{timeout_at, Instant};

use super::codec::{
    decode_coap, encode_coap, CoapCode, CoapCodecError, CoapMessage, CoapType, CONTENT_FORMAT_JSON,
};

/// Retransmission and response-wait parameters.
///
/// Confirmables: retransmit with binary exponential backoff starting at
/// `ack_timeout`, doubling per attempt, up to `max_retransmits` resends.
/// Non-confirmables: send once, wait `non_timeout` for a token-matched
/// response.
#[derive(Debug, Clone)]
pub struct CoapTimings {
    pub ack_timeout: Duration,
    pub max_retransmits: u32,
    pub non_timeout: Duration,
}

impl Default for CoapTimings {
    fn default() -> Self {
        CoapTimings {
            ack_timeout: Duration::from_secs(2),
            max_retransmits: 4,
            non_timeout: Duration::from_secs(2),
        }
    }
}

#[derive(Debug, Error)]
pub enum CoapRequestError {
    #[error("no response before the deadline")]
    Timeout,
    #[error("peer reset the exchange")]
    Reset,
    #[error("message is not a request")]
    NotARequest,
    #[error("codec error: {0}")]
    Codec(#[from] CoapCodecError),
    #[error("socket error: {0}")]
    Io(#[from] std::io::Error),
}

/// Sends one request and waits for its response.
///
/// `confirmable` selects the message type (CON with retransmission, or NON
/// fire-once). Responses are matched by token; for confirmables the ACK
/// must also mirror the request message id.
pub async fn coap_request(
    server_addr: &str,
    mut message: CoapMessage,
    confirmable: bool,
    timings: &CoapTimings,
) -> Result<CoapMessage, CoapRequestError> {
    if !message.code.is_request() {
        return Err(CoapRequestError::NotARequest);
    }
    message.msg_type = if confirmable {
        CoapType::Con
    } else {
        CoapType::Non
    };

    let socket = UdpSocket::bind("127.0.0.1:0").await?;
    socket.connect(server_addr).await?;
    let datagram = encode_coap(&message)?;

    let attempts = if confirmable {
        message_attempts(timings)
    } else {
        vec![timings.non_timeout]
    };

    let mut buf = [0u8; 65536];
    for wait in attempts {
        socket.send(&datagram).await?;
        let deadline = Instant::now() + wait;
        loop {
            let len = match timeout_at(deadline, socket.recv(&mut buf)).await {
                Ok(recv) => recv?,
                Err(_) => break, // this attempt timed out
            };
            let response = match decode_coap(&buf[..len]) {
                Ok(msg) => msg,
                Err(_) => continue,
            };
            if response.msg_type == CoapType::Rst && response.message_id == message.message_id {
                return Err(CoapRequestError::Reset);
            }
            // Responses are matched by token; anything else is ignored.
            if response.token != message.token || response.code.is_empty() {
                continue;
            }
            if confirmable
                && response.msg_type == CoapType::Ack
                && response.message_id != message.message_id
            {
                continue;
            }
            return Ok(response);
        }
    }
    Err(CoapRequestError::Timeout)
}

fn message_attempts(timings: &CoapTimings) -> Vec<Duration> {
    // Initial transmission plus max_retransmits resends, doubling waits.
    (0..=timings.max_retransmits)
        .map(|i| timings.ack_timeout * 2u32.pow(i))
        .collect()
}

/// Convenience wrapper owning message-id/token generation for a fixed peer.
pub struct CoapClient {
    server_addr: String,
    timings: CoapTimings,
    next_mid: u16,
}

impl CoapClient {
    pub fn new(server_addr: impl Into<String>) -> CoapClient {
        CoapClient::with_timings(server_addr, CoapTimings::default())
    }

    pub fn with_timings(server_addr: impl Into<String>, timings: CoapTimings) -> CoapClient {
        CoapClient {
            server_addr: server_addr.into(),
            timings,
            next_mid: rand::rng().random(),
        }
    }

    fn next_message(&mut self, code: CoapCode) -> CoapMessage {
        let mid = self.next_mid;
        self.next_mid = self.next_mid.wrapping_add(1);
        let token: [u8; 4] = rand::rng().random();
        CoapMessage::new(CoapType::Non, code, mid).with_token(token.to_vec())
    }

    /// NON POST with a JSON payload; waits for the token-matched response.
    pub async fn post_json(
        &mut self,
        path: &str,
        payload: Vec<u8>,
    ) -> Result<CoapMessage, CoapRequestError> {
        let msg = self
            .next_message(CoapCode::POST)
            .with_path(path)
            .with_payload(payload, Some(CONTENT_FORMAT_JSON));
        coap_request(&self.server_addr, msg, false, &self.timings).await
    }

    /// CON GET with optional `key=value` queries.
    pub async fn get(
        &mut self,
        path: &str,
        queries: &[(&str, &str)],
    ) -> Result<CoapMessage, CoapRequestError> {
        let mut msg = self.next_message(CoapCode::GET).with_path(path);
        for (key, value) in queries {
            msg = msg.with_query(key, value);
        }
        coap_request(&self.server_addr, msg, true, &self.timings).await
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confirmable_attempt_schedule_doubles() {
        let timings = CoapTimings {
            ack_timeout: Duration::from_secs(2),
            max_retransmits: 4,
            non_timeout: Duration::from_secs(2),
        };
        let waits = message_attempts(&timings);
        assert_eq!(
            waits,
            vec![
                Duration::from_secs(2),
                Duration::from_secs(4),
                Duration::from_secs(8),
                Duration::from_secs(16),
                Duration::from_secs(32),
            ]
        );
    }
}
