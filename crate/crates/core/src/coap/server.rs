//! CoAP server: one datagram socket served by a single receive loop that
//! dispatches requests to per-path handlers in arrival order.
//!
//! Confirmable requests get a piggybacked response in an ACK sharing the
//! request's message id and token; non-confirmables get a NON response
//! with a fresh message id and the same token. Duplicate requests (same
//! source endpoint and message id within the dedup window) are answered
//! from a response cache without re-invoking the handler.

use std::collections::{HashMap, VecDeque};
use std::future::Future;
use std::net::SocketAddr;
use std::pin::Pin;
use std::sync::Arc;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use tokio::net::UdpSocket;
use tokio::task::JoinHandle;

use super::codec::{
    decode_coap, encode_coap, CoapCode, CoapMessage, CoapType, OPTION_CONTENT_FORMAT,
};

pub const DEDUP_WINDOW: Duration = Duration::from_secs(60);
pub const DEDUP_CAPACITY: usize = 4096;

/// What a handler sees of an incoming request.
#[derive(Debug, Clone)]
pub struct CoapRequest {
    pub code: CoapCode,
    pub path: String,
    pub queries: Vec<String>,
    pub payload: Vec<u8>,
    pub source: SocketAddr,
}

/// What a handler produces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoapResponse {
    pub code: CoapCode,
    pub payload: Vec<u8>,
    pub content_format: Option<u16>,
}

impl CoapResponse {
    pub fn new(code: CoapCode) -> CoapResponse {
        CoapResponse {
            code,
            payload: Vec::new(),
            content_format: None,
        }
    }

    pub fn json(code: CoapCode, payload: Vec<u8>) -> CoapResponse {
        CoapResponse {
            code,
            payload,
            content_format: Some(super::codec::CONTENT_FORMAT_JSON),
        }
    }
}

type HandlerFuture = Pin<Box<dyn Future<Output = CoapResponse> + Send>>;
type Handler = Arc<dyn Fn(CoapRequest) -> HandlerFuture + Send + Sync>;

/// Path -> handler table.
#[derive(Default, Clone)]
pub struct Resources {
    handlers: HashMap<String, Handler>,
}

impl Resources {
    pub fn new() -> Resources {
        Resources::default()
    }

    /// Registers a handler for an exact path (no leading slash).
    pub fn at<F, Fut>(mut self, path: &str, handler: F) -> Resources
    where
        F: Fn(CoapRequest) -> Fut + Send + Sync + 'static,
        Fut: Future<Output = CoapResponse> + Send + 'static,
    {
        self.handlers.insert(
            path.to_string(),
            Arc::new(move |req| Box::pin(handler(req))),
        );
        self
    }
}

struct DedupCache {
    entries: HashMap<(SocketAddr, u16), (Instant, Vec<u8>)>,
    order: VecDeque<(SocketAddr, u16)>,
}

impl DedupCache {
    fn new() -> DedupCache {
        DedupCache {
            entries: HashMap::new(),
            order: VecDeque::new(),
        }
    }

    fn lookup(&self, key: (SocketAddr, u16), now: Instant) -> Option<&[u8]> {
        self.entries
            .get(&key)
            .filter(|(at, _)| now.duration_since(*at) < DEDUP_WINDOW)
            .map(|(_, bytes)| bytes.as_slice())
    }

    fn insert(&mut self, key: (SocketAddr, u16), bytes: Vec<u8>, now: Instant) {
        while let Some(oldest) = self.order.front() {
            let expired = self
                .entries
                .get(oldest)
                .is_none_or(|(at, _)| now.duration_since(*at) >= DEDUP_WINDOW);
            if expired || self.order.len() >= DEDUP_CAPACITY {
                let key = self.order.pop_front().unwrap();
                self.entries.remove(&key);
            } else {
                break;
            }
        }
        if self.entries.insert(key, (now, bytes)).is_none() {
            self.order.push_back(key);
        }
    }
}

/// UDP CoAP server. Binds on construction; serves until dropped.
pub struct CoapServer {
    local_addr: SocketAddr,
    task: JoinHandle<()>,
}

impl CoapServer {
    pub async fn bind(addr: &str, resources: Resources) -> std::io::Result<Self> {
        let socket = UdpSocket::bind(addr).await?;
        let local_addr = socket.local_addr()?;
        info!("coap server listening on {local_addr}");
        let task = tokio::spawn(serve(socket, resources));
        Ok(CoapServer { local_addr, task })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }
}

impl Drop for CoapServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

async fn serve(socket: UdpSocket, resources: Resources) {
    let mut dedup = DedupCache::new();
    let mut next_mid: u16 = rand_mid();
    let mut buf = [0u8; 65536];

    loop {
        let (len, source) = match socket.recv_from(&mut buf).await {
            Ok(pair) => pair,
            Err(e) => {
                warn!("coap recv failed: {e}");
                continue;
            }
        };
        let request = match decode_coap(&buf[..len]) {
            Ok(msg) => msg,
            Err(e) => {
                debug!("coap: dropping undecodable datagram from {source}: {e}");
                continue;
            }
        };
        if !request.code.is_request() {
            continue;
        }
        if !matches!(request.msg_type, CoapType::Con | CoapType::Non) {
            continue;
        }

        let now = Instant::now();
        let key = (source, request.message_id);
        if let Some(cached) = dedup.lookup(key, now) {
            debug!(
                "coap: duplicate mid {} from {source}, replaying cache",
                request.message_id
            );
            let _ = socket.send_to(cached, source).await;
            continue;
        }

        let response = match resources.handlers.get(&request.path()) {
            Some(handler) => {
                let req = CoapRequest {
                    code: request.code,
                    path: request.path(),
                    queries: request.queries(),
                    payload: request.payload.clone(),
                    source,
                };
                handler(req).await
            }
            None => CoapResponse::new(CoapCode::NOT_FOUND),
        };

        let mut reply = match request.msg_type {
            CoapType::Con => {
                // Piggybacked response in the ACK, mirroring the request MID.
                CoapMessage::new(CoapType::Ack, response.code, request.message_id)
            }
            _ => {
                let mid = next_mid;
                next_mid = next_mid.wrapping_add(1);
                CoapMessage::new(CoapType::Non, response.code, mid)
            }
        }
        .with_token(request.token.clone());
        if let Some(cf) = response.content_format {
            reply.add_option(OPTION_CONTENT_FORMAT, cf.to_be_bytes().to_vec());
        }
        reply.payload = response.payload;

        match encode_coap(&reply) {
            Ok(bytes) => {
                dedup.insert(key, bytes.clone(), now);
                let _ = socket.send_to(&bytes, source).await;
            }
            Err(e) => warn!("coap: response encode failed: {e}"),
        }
    }
}

fn rand_mid() -> u16 {
    rand::random()
}
