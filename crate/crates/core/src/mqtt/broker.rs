//! Embedded MQTT broker. [`BrokerState::step`] is a pure transition
//! function from one inbound packet to outbound packets and connection
//! directives; all I/O concurrency lives at the connection boundary.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use log::{debug, info, warn};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio::task::JoinHandle;

use super::codec::{decode_packet, encode_packet, MqttCodecError, MqttPacket};
use super::topic::{matches_unchecked, validate_filter, validate_topic};

/// Identifies one TCP connection for the lifetime of the broker.
pub type ConnId = u64;

#[derive(Debug, Default)]
struct Session {
    conn: ConnId,
    /// Validated topic filters, deduplicated, in subscription order.
    filters: Vec<String>,
}

/// Pure broker state: live sessions and their subscriptions.
///
/// A client id appears in at most one live session; a new CONNECT with the
/// same id evicts the old session.
#[derive(Debug, Default)]
pub struct BrokerState {
    /// client_id -> session
    sessions: HashMap<String, Session>,
    /// conn -> client_id, present once CONNECT has been accepted
    conn_clients: HashMap<ConnId, String>,
}

/// Result of feeding one packet (or connection event) through the broker.
#[derive(Debug, Default, PartialEq, Eq)]
pub struct StepOutcome {
    /// Packets to deliver, in order, to specific connections.
    pub outbound: Vec<(ConnId, MqttPacket)>,
    /// Connections the broker wants closed (after their outbound drains).
    pub close: Vec<ConnId>,
}

impl BrokerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn client_of(&self, conn: ConnId) -> Option<&str> {
        self.conn_clients.get(&conn).map(String::as_str)
    }

    pub fn session_count(&self) -> usize {
        self.sessions.len()
    }

    /// Handles one decoded packet from `conn`.
    ///
    /// The first packet on a connection must be CONNECT; any protocol
    /// violation closes the connection.
    pub fn step(&mut self, conn: ConnId, packet: MqttPacket) -> StepOutcome {
        let mut out = StepOutcome::default();
        let established = self.conn_clients.contains_key(&conn);

        match packet {
            MqttPacket::Connect { client_id, .. } => {
                if established {
                    warn!("conn {conn}: duplicate CONNECT");
                    out.close.push(conn);
                    return out;
                }
                if client_id.is_empty() {
                    out.outbound.push((
                        conn,
                        MqttPacket::ConnAck {
                            session_present: false,
                            return_code: 2, // identifier rejected
                        },
                    ));
                    out.close.push(conn);
                    return out;
                }
                if let Some(old) = self.sessions.remove(&client_id) {
                    info!(
                        "client {client_id:?}: evicting session on conn {}",
                        old.conn
                    );
                    self.conn_clients.remove(&old.conn);
                    out.close.push(old.conn);
                }
                self.sessions.insert(
                    client_id.clone(),
                    Session {
                        conn,
                        filters: Vec::new(),
                    },
                );
                self.conn_clients.insert(conn, client_id);
                out.outbound.push((
                    conn,
                    MqttPacket::ConnAck {
                        session_present: false,
                        return_code: 0,
                    },
                ));
            }
            _ if !established => {
                warn!("conn {conn}: first packet was not CONNECT");
                out.close.push(conn);
            }
            MqttPacket::Publish {
                qos,
                topic,
                packet_id,
                payload,
                ..
            } => {
                if validate_topic(&topic).is_err() {
                    out.close.push(conn);
                    return out;
                }
                // One copy per session with at least one matching filter,
                // always re-sent at qos 0.
                for session in self.sessions.values() {
                    if session.filters.iter().any(|f| matches_unchecked(f, &topic)) {
                        out.outbound.push((
                            session.conn,
                            MqttPacket::Publish {
                                dup: false,
                                qos: 0,
                                retain: false,
                                topic: topic.clone(),
                                packet_id: None,
                                payload: payload.clone(),
                            },
                        ));
                    }
                }
                if qos == 1 {
                    let packet_id = packet_id.expect("decoder guarantees qos 1 carries an id");
                    out.outbound.push((conn, MqttPacket::PubAck { packet_id }));
                }
            }
            MqttPacket::Subscribe { packet_id, filters } => {
                let client_id = &self.conn_clients[&conn];
                let session = self.sessions.get_mut(client_id).expect("session exists");
                let mut return_codes = Vec::with_capacity(filters.len());
                for (filter, _requested_qos) in filters {
                    if validate_filter(&filter).is_ok() {
                        if !session.filters.contains(&filter) {
                            session.filters.push(filter);
                        }
                        // Granted qos is min(requested, 0): egress is always qos 0.
                        return_codes.push(0);
                    } else {
                        return_codes.push(0x80);
                    }
                }
                out.outbound.push((
                    conn,
                    MqttPacket::SubAck {
                        packet_id,
                        return_codes,
                    },
                ));
            }
            MqttPacket::PingReq => out.outbound.push((conn, MqttPacket::PingResp)),
            MqttPacket::Disconnect => {
                self.remove_conn(conn);
                out.close.push(conn);
            }
            MqttPacket::PubAck { .. } => {
                // The broker only ever delivers at qos 0, so inbound acks
                // reference nothing; ignore them.
            }
            MqttPacket::ConnAck { .. } | MqttPacket::SubAck { .. } | MqttPacket::PingResp => {
                warn!("conn {conn}: received server-only packet");
                out.close.push(conn);
            }
        }
        out
    }

    /// Forgets a connection whose transport went away.
    pub fn remove_conn(&mut self, conn: ConnId) {
        if let Some(client_id) = self.conn_clients.remove(&conn) {
            // Only drop the session if it still belongs to this conn; a
            // newer CONNECT may have taken the client id over already.
            if self.sessions.get(&client_id).map(|s| s.conn) == Some(conn) {
                self.sessions.remove(&client_id);
            }
        }
    }
}

enum Outbound {
    Packet(MqttPacket),
    Close,
}

struct Shared {
    state: Mutex<BrokerCore>,
}

struct BrokerCore {
    broker: BrokerState,
    writers: HashMap<ConnId, mpsc::UnboundedSender<Outbound>>,
}

impl Shared {
    fn dispatch(&self, conn: ConnId, packet: MqttPacket) {
        let mut core = self.state.lock().unwrap();
        let outcome = core.broker.step(conn, packet);
        for (target, packet) in outcome.outbound {
            if let Some(tx) = core.writers.get(&target) {
                let _ = tx.send(Outbound::Packet(packet));
            }
        }
        for target in outcome.close {
            core.broker.remove_conn(target);
            if let Some(tx) = core.writers.remove(&target) {
                let _ = tx.send(Outbound::Close);
            }
        }
    }

    fn drop_conn(&self, conn: ConnId) {
        let mut core = self.state.lock().unwrap();
        core.broker.remove_conn(conn);
        core.writers.remove(&conn);
    }
}

/// TCP broker server. Binds on construction; serves until dropped or
/// [`MqttBroker::shutdown`].
pub struct MqttBroker {
    local_addr: SocketAddr,
    accept_task: JoinHandle<()>,
}

impl MqttBroker {
    /// Binds the listener and starts serving. Use port 0 for an ephemeral
    /// port; the bound address is available via [`MqttBroker::local_addr`].
    pub async fn bind(addr: &str) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr).await?;
        let local_addr = listener.local_addr()?;
        info!("mqtt broker listening on {local_addr}");

        let shared = Arc::new(Shared {
            state: Mutex::new(BrokerCore {
                broker: BrokerState::new(),
                writers: HashMap::new(),
            }),
        });

        let accept_task = tokio::spawn(async move {
            let mut next_conn: ConnId = 1;
            loop {
                let (stream, peer) = match listener.accept().await {
                    Ok(pair) => pair,
                    Err(e) => {
                        warn!("mqtt accept failed: {e}");
                        continue;
                    }
                };
                let conn = next_conn;
                next_conn += 1;
                debug!("conn {conn}: accepted from {peer}");
                let shared = shared.clone();
                tokio::spawn(serve_connection(shared, conn, stream));
            }
        });

        Ok(MqttBroker {
            local_addr,
            accept_task,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn shutdown(&self) {
        self.accept_task.abort();
    }
}

impl Drop for MqttBroker {
    fn drop(&mut self) {
        self.shutdown();
    }
}

async fn serve_connection(shared: Arc<Shared>, conn: ConnId, stream: TcpStream) {
    if let Err(e) = stream.set_nodelay(true) {
        debug!("conn {conn}: set_nodelay failed: {e}");
    }
    let (mut read_half, mut write_half) = stream.into_split();

    let (tx, mut rx) = mpsc::unbounded_channel();
    shared.state.lock().unwrap().writers.insert(conn, tx);

    let writer = tokio::spawn(async move {
        while let Some(item) = rx.recv().await {
            match item {
                Outbound::Packet(packet) => {
                    let bytes = match encode_packet(&packet) {
                        Ok(b) => b,
                        Err(e) => {
                            warn!("conn {conn}: outbound encode failed: {e}");
                            break;
                        }
                    };
                    if write_half.write_all(&bytes).await.is_err() {
                        break;
                    }
                }
                Outbound::Close => break,
            }
        }
        let _ = write_half.shutdown().await;
    });

    let mut buf: Vec<u8> = Vec::with_capacity(4096);
    let mut scratch = [0u8; 4096];
    'read: loop {
        loop {
            match decode_packet(&buf) {
                Ok((packet, used)) => {
                    buf.drain(..used);
                    shared.dispatch(conn, packet);
                    if !shared.state.lock().unwrap().writers.contains_key(&conn) {
                        break 'read; // broker closed us
                    }
                }
                Err(MqttCodecError::Truncated) => break,
                Err(e) => {
                    debug!("conn {conn}: protocol error: {e}");
                    break 'read;
                }
            }
        }
        match read_half.read(&mut scratch).await {
            Ok(0) | Err(_) => break,
            Ok(n) => buf.extend_from_slice(&scratch[..n]),
        }
    }

    shared.drop_conn(conn);
    writer.abort();
    debug!("conn {conn}: closed");
}
