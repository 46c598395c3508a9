//! Registration and bearer-token verification.
//!
//! Tokens are opaque 32-hex-char secrets (128 bits of entropy); the store
//! keeps only a SHA-256 hash. The plaintext is returned exactly once, in
//! the registration response.

use std::time::Duration;

use rand::RngCore;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::Timestamp;
use crate::storage::{DuplicateName, Store};

/// Principal kinds accepted at registration.
pub const KINDS: [&str; 3] = ["mqtt", "coap", "gateway"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Registration {
    pub principal_id: u64,
    pub name: String,
    pub kind: String,
    /// Plaintext token, disclosed only here.
    pub token: String,
    pub expires_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegisterError {
    #[error("name must be nonempty")]
    EmptyName,
    #[error("kind must be one of mqtt, coap, gateway")]
    BadKind,
    #[error(transparent)]
    Duplicate(#[from] DuplicateName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum AuthError {
    #[error("missing")]
    Missing,
    #[error("malformed")]
    Malformed,
    #[error("unknown")]
    Unknown,
    #[error("expired")]
    Expired,
}

impl AuthError {
    /// Stable machine-readable tag used in 401 response bodies.
    pub fn reason(self) -> &'static str {
        match self {
            AuthError::Missing => "missing",
            AuthError::Malformed => "malformed",
            AuthError::Unknown => "unknown",
            AuthError::Expired => "expired",
        }
    }
}

pub fn generate_token() -> String {
    let mut bytes = [0u8; 16];
    rand::rng().fill_bytes(&mut bytes);
    hex(&bytes)
}

pub fn token_hash(token: &str) -> String {
    hex(&Sha256::digest(token.as_bytes()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Registers a principal and issues a fresh token valid for `ttl`.
pub fn register(
    store: &Store,
    name: &str,
    kind: &str,
    ttl: Duration,
    now: Timestamp,
) -> Result<Registration, RegisterError> {
    if name.is_empty() {
        return Err(RegisterError::EmptyName);
    }
    if !KINDS.contains(&kind) {
        return Err(RegisterError::BadKind);
    }
    let token = generate_token();
    let expires_at = Timestamp::from_micros(now.micros() + ttl.as_micros() as i64);
    let row = store.register_principal(name, kind, token_hash(&token), expires_at, now)?;
    Ok(Registration {
        principal_id: row.principal_id,
        name: row.name,
        kind: row.kind,
        token,
        expires_at,
    })
}

/// Verifies an `Authorization` header value, returning the principal id.
pub fn authenticate(
    store: &Store,
    authorization: Option<&str>,
    now: Timestamp,
) -> Result<u64, AuthError> {
    let header = authorization.ok_or(AuthError::Missing)?;
    let token = header.strip_prefix("Bearer ").ok_or(AuthError::Malformed)?;
    if token.len() != 32 || !token.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(AuthError::Malformed);
    }
    let row = store
        .principal_by_token_hash(&token_hash(token))
        .ok_or(AuthError::Unknown)?;
    if now >= row.expires_at {
        return Err(AuthError::Expired);
    }
    Ok(row.principal_id)
}
