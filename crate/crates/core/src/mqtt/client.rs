//! MQTT publisher and subscriber clients. A client is a single-owner
//! object; it must not be driven from two tasks at once.

use std::time::Duration;

use log::{debug, warn};
use thiserror::Error;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::TcpStream;
use tokio::sync::mpsc;
use tokio::task::JoinHandle;

use super::codec::{decode_packet, encode_packet, MqttCodecError, MqttPacket};
use super::topic::validate_filter;

pub const DEFAULT_ACK_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Error)]
pub enum MqttClientError {
    #[error("connection refused or unreachable: {0}")]
    ConnectionRefused(std::io::Error),
    #[error("broker rejected CONNECT with return code {0}")]
    ConnectRejected(u8),
    #[error("broker rejected subscription filter (return code 0x80)")]
    SubscribeRejected,
    #[error("invalid topic filter: {0}")]
    InvalidFilter(#[from] super::topic::InvalidFilter),
    #[error("timed out waiting for PUBACK")]
    AckTimeout,
    #[error("connection broken: {0}")]
    BrokenConnection(String),
    #[error("protocol error: {0}")]
    Protocol(#[from] MqttCodecError),
}

struct PacketStream {
    read: OwnedReadHalf,
    buf: Vec<u8>,
}

impl PacketStream {
    async fn next(&mut self) -> Result<MqttPacket, MqttClientError> {
        let mut scratch = [0u8; 4096];
        loop {
            match decode_packet(&self.buf) {
                Ok((packet, used)) => {
                    self.buf.drain(..used);
                    return Ok(packet);
                }
                Err(MqttCodecError::Truncated) => {}
                Err(e) => return Err(e.into()),
            }
            match self.read.read(&mut scratch).await {
                Ok(0) => {
                    return Err(MqttClientError::BrokenConnection(
                        "peer closed the connection".into(),
                    ))
                }
                Ok(n) => self.buf.extend_from_slice(&scratch[..n]),
                Err(e) => return Err(MqttClientError::BrokenConnection(e.to_string())),
            }
        }
    }
}

async fn open_session(
    broker_addr: &str,
    client_id: &str,
) -> Result<(PacketStream, OwnedWriteHalf), MqttClientError> {
    let stream = TcpStream::connect(broker_addr)
        .await
        .map_err(MqttClientError::ConnectionRefused)?;
    let _ = stream.set_nodelay(true);
    let (read, mut write) = stream.into_split();
    let mut packets = PacketStream {
        read,
        buf: Vec::with_capacity(1024),
    };

    let connect = encode_packet(&MqttPacket::Connect {
        client_id: client_id.to_string(),
        clean_session: true,
        keep_alive: 0,
    })?;
    write
        .write_all(&connect)
        .await
        .map_err(|e| MqttClientError::BrokenConnection(e.to_string()))?;

    match packets.next().await? {
        MqttPacket::ConnAck { return_code: 0, .. } => Ok((packets, write)),
        MqttPacket::ConnAck { return_code, .. } => {
            Err(MqttClientError::ConnectRejected(return_code))
        }
        other => Err(MqttClientError::BrokenConnection(format!(
            "expected CONNACK, got {other:?}"
        ))),
    }
}

/// Publishing client: one CONNECT handshake, then one PUBLISH per call.
pub struct MqttPublisher {
    packets: PacketStream,
    write: OwnedWriteHalf,
    next_packet_id: u16,
    ack_timeout: Duration,
}

impl MqttPublisher {
    pub async fn connect(broker_addr: &str, client_id: &str) -> Result<Self, MqttClientError> {
        Self::connect_with_timeout(broker_addr, client_id, DEFAULT_ACK_TIMEOUT).await
    }

    pub async fn connect_with_timeout(
        broker_addr: &str,
        client_id: &str,
        ack_timeout: Duration,
    ) -> Result<Self, MqttClientError> {
        let (packets, write) = open_session(broker_addr, client_id).await?;
        Ok(MqttPublisher {
            packets,
            write,
            next_packet_id: 1,
            ack_timeout,
        })
    }

    /// Publishes one message. QoS 0 returns once the write completes;
    /// QoS 1 waits for the matching PUBACK (up to the ack timeout).
    pub async fn publish(
        &mut self,
        topic: &str,
        payload: &[u8],
        qos: u8,
    ) -> Result<(), MqttClientError> {
        let packet_id = match qos {
            0 => None,
            1 => {
                let id = self.next_packet_id;
                self.next_packet_id = self.next_packet_id.checked_add(1).unwrap_or(1);
                Some(id)
            }
            _ => {
                return Err(MqttCodecError::InvariantViolation("qos above 1 unsupported").into());
            }
        };
        let bytes = encode_packet(&MqttPacket::Publish {
            dup: false,
            qos,
            retain: false,
            topic: topic.to_string(),
            packet_id,
            payload: payload.to_vec(),
        })?;
        self.write
            .write_all(&bytes)
            .await
            .map_err(|e| MqttClientError::BrokenConnection(e.to_string()))?;

        if let Some(expected) = packet_id {
            let wait = async {
                loop {
                    match self.packets.next().await? {
                        MqttPacket::PubAck { packet_id } if packet_id == expected => {
                            return Ok(());
                        }
                        MqttPacket::PubAck { packet_id } => {
                            debug!("ignoring stale PUBACK {packet_id}");
                        }
                        MqttPacket::PingResp => {}
                        other => {
                            return Err(MqttClientError::BrokenConnection(format!(
                                "unexpected packet while awaiting PUBACK: {other:?}"
                            )))
                        }
                    }
                }
            };
            tokio::time::timeout(self.ack_timeout, wait)
                .await
                .map_err(|_| MqttClientError::AckTimeout)??;
        }
        Ok(())
    }

    pub async fn disconnect(mut self) {
        if let Ok(bytes) = encode_packet(&MqttPacket::Disconnect) {
            let _ = self.write.write_all(&bytes).await;
        }
        let _ = self.write.shutdown().await;
    }
}

/// What a subscriber observes: deliveries in per-publisher order, then a
/// terminal connection-loss notice if the transport fails.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubscriberEvent {
    Message { topic: String, payload: Vec<u8> },
    ConnectionLost(String),
}

/// Subscribing client. Filters are validated locally and registered during
/// connect; deliveries are consumed via [`MqttSubscriber::recv`].
pub struct MqttSubscriber {
    events: mpsc::UnboundedReceiver<SubscriberEvent>,
    reader_task: JoinHandle<()>,
    _write: OwnedWriteHalf,
}

impl MqttSubscriber {
    pub async fn connect(
        broker_addr: &str,
        client_id: &str,
        filters: &[&str],
    ) -> Result<Self, MqttClientError> {
        for filter in filters {
            validate_filter(filter)?;
        }
        let (mut packets, mut write) = open_session(broker_addr, client_id).await?;

        let subscribe = encode_packet(&MqttPacket::Subscribe {
            packet_id: 1,
            filters: filters.iter().map(|f| (f.to_string(), 0)).collect(),
        })?;
        write
            .write_all(&subscribe)
            .await
            .map_err(|e| MqttClientError::BrokenConnection(e.to_string()))?;
        match packets.next().await? {
            MqttPacket::SubAck { return_codes, .. } => {
                if return_codes.contains(&0x80) {
                    return Err(MqttClientError::SubscribeRejected);
                }
            }
            other => {
                return Err(MqttClientError::BrokenConnection(format!(
                    "expected SUBACK, got {other:?}"
                )))
            }
        }

        let (tx, events) = mpsc::unbounded_channel();
        let reader_task = tokio::spawn(async move {
            loop {
                match packets.next().await {
                    Ok(MqttPacket::Publish { topic, payload, .. }) => {
                        if tx
                            .send(SubscriberEvent::Message { topic, payload })
                            .is_err()
                        {
                            break;
                        }
                    }
                    Ok(MqttPacket::PingResp) => {}
                    Ok(other) => {
                        warn!("subscriber: unexpected packet {other:?}");
                    }
                    Err(e) => {
                        let _ = tx.send(SubscriberEvent::ConnectionLost(e.to_string()));
                        break;
                    }
                }
            }
        });

        Ok(MqttSubscriber {
            events,
            reader_task,
            _write: write,
        })
    }

    /// Next event, or `None` once the connection is gone and the last
    /// event (including the `ConnectionLost` notice) has been consumed.
    pub async fn recv(&mut self) -> Option<SubscriberEvent> {
        self.events.recv().await
    }
}

impl Drop for MqttSubscriber {
    fn drop(&mut self) {
        self.reader_task.abort();
    }
}
