//! REST middleware: principal registration with opaque bearer tokens,
//! reading ingestion and retrieval, windowed statistics, and a served
//! machine-readable API description.

pub mod auth;
pub mod openapi;
pub mod routes;

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use log::info;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::storage::Store;

pub use auth::{authenticate, register, AuthError, RegisterError, Registration};
pub use routes::{build_router, AppState, ROUTES};

pub const DEFAULT_TOKEN_TTL: Duration = Duration::from_secs(24 * 60 * 60);

/// Running HTTP middleware bound to a local address.
pub struct MiddlewareServer {
    local_addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<()>,
}

impl MiddlewareServer {
    pub async fn bind(
        addr: &str,
        store: Arc<Store>,
        token_ttl: Duration,
    ) -> std::io::Result<MiddlewareServer> {
        Self::bind_state(addr, AppState::new(store, token_ttl)).await
    }

    /// Binds with a fully configured state (e.g. authenticated reads).
    pub async fn bind_state(addr: &str, state: AppState) -> std::io::Result<MiddlewareServer> {
        let listener = TcpListener::bind(addr).await?;
        let local_addr = listener.local_addr()?;
        info!("middleware listening on http://{local_addr}");

        let app = build_router(state);
        let (shutdown, rx) = oneshot::channel();
        let task = tokio::spawn(async move {
            let serve = axum::serve(listener, app).with_graceful_shutdown(async {
                let _ = rx.await;
            });
            if let Err(e) = serve.await {
                log::warn!("middleware server error: {e}");
            }
        });

        Ok(MiddlewareServer {
            local_addr,
            shutdown: Some(shutdown),
            task,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.local_addr)
    }

    /// Signals graceful shutdown and waits for in-flight requests.
    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        let _ = (&mut self.task).await;
    }
}

impl Drop for MiddlewareServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.task.abort();
    }
}
