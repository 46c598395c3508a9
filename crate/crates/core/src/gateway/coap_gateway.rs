//! CoAP-side gateway: a CoAP server whose ingest resource normalizes and
//! forwards device POSTs, and whose readings resource translates CoAP GET
//! queries into middleware reads.

use std::net::SocketAddr;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use log::debug;

use crate::coap::{CoapCode, CoapRequest, CoapResponse, CoapServer, Resources};

use super::forward::{ForwardError, Forwarder};
use super::normalize::normalize_coap;
use super::CoapGatewaySettings;

/// Translates recognized `key=value` Uri-Query options into middleware
/// query parameters. `Some(..)` carries the parameter list; `None` means
/// the caller asked for `limit=0` and gets an empty array without a
/// middleware round trip (the middleware's limit range starts at 1).
pub fn translate_queries(queries: &[String]) -> Option<Vec<(String, String)>> {
    let mut params = Vec::new();
    for query in queries {
        let Some((key, value)) = query.split_once('=') else {
            continue;
        };
        match key {
            "limit" if value == "0" => return None,
            "protocol" | "limit" | "since" => params.push((key.to_string(), value.to_string())),
            _ => {}
        }
    }
    Some(params)
}

fn error_body(message: &str) -> Vec<u8> {
    serde_json::json!({ "error": message })
        .to_string()
        .into_bytes()
}

/// Running CoAP gateway.
pub struct CoapGateway {
    server: CoapServer,
    forwarder: Arc<Forwarder>,
}

impl CoapGateway {
    pub async fn start(
        settings: &CoapGatewaySettings,
        forwarder: Arc<Forwarder>,
    ) -> std::io::Result<CoapGateway> {
        let ingest_forwarder = forwarder.clone();
        let readings_forwarder = forwarder.clone();

        let resources = Resources::new()
            .at(&settings.ingest_path, move |req| {
                let forwarder = ingest_forwarder.clone();
                async move { handle_ingest(req, forwarder).await }
            })
            .at(&settings.readings_path, move |req| {
                let forwarder = readings_forwarder.clone();
                async move { handle_readings(req, forwarder).await }
            });

        let server = CoapServer::bind(&settings.bind_addr, resources).await?;
        Ok(CoapGateway { server, forwarder })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.server.local_addr()
    }

    pub fn forwarder(&self) -> Arc<Forwarder> {
        self.forwarder.clone()
    }
}

async fn handle_ingest(req: CoapRequest, forwarder: Arc<Forwarder>) -> CoapResponse {
    if req.code != CoapCode::POST {
        return CoapResponse::json(CoapCode::BAD_REQUEST, error_body("ingest expects POST"));
    }
    let stats = forwarder.stats();
    let record = match normalize_coap(&req.payload) {
        Ok(record) => record,
        Err(e) => {
            stats.normalize_errors.fetch_add(1, Ordering::Relaxed);
            debug!("coap gateway: rejecting ingest: {e}");
            return CoapResponse::json(CoapCode::BAD_REQUEST, error_body(&e.to_string()));
        }
    };
    stats.normalized.fetch_add(1, Ordering::Relaxed);
    match forwarder.forward(&record).await {
        Ok(summary) => CoapResponse::json(
            CoapCode::CREATED,
            serde_json::json!({
                "id": summary.id,
                "inserted_ts": summary.inserted_ts,
                "sec_diff": summary.sec_diff,
            })
            .to_string()
            .into_bytes(),
        ),
        Err(_) => CoapResponse::json(
            CoapCode::SERVICE_UNAVAILABLE,
            error_body("middleware unavailable"),
        ),
    }
}

async fn handle_readings(req: CoapRequest, forwarder: Arc<Forwarder>) -> CoapResponse {
    if req.code != CoapCode::GET {
        return CoapResponse::json(CoapCode::BAD_REQUEST, error_body("readings expects GET"));
    }
    forwarder.stats().queries.fetch_add(1, Ordering::Relaxed);
    let Some(params) = translate_queries(&req.queries) else {
        return CoapResponse::json(CoapCode::CONTENT, b"[]".to_vec());
    };
    match forwarder.fetch_readings(&params).await {
        Ok(body) => CoapResponse::json(CoapCode::CONTENT, body),
        Err(ForwardError::FetchRejected { body, .. }) => {
            CoapResponse::json(CoapCode::BAD_REQUEST, body.into_bytes())
        }
        Err(e) => {
            debug!("coap gateway: read path failed: {e}");
            CoapResponse::json(
                CoapCode::SERVICE_UNAVAILABLE,
                error_body("middleware unavailable"),
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_translation_keeps_known_keys() {
        let queries = vec![
            "protocol=mqtt".to_string(),
            "limit=1".to_string(),
            "since=2024-03-01T12:00:00.000000Z".to_string(),
            "unknown=x".to_string(),
            "dangling".to_string(),
        ];
        assert_eq!(
            translate_queries(&queries).unwrap(),
            vec![
                ("protocol".to_string(), "mqtt".to_string()),
                ("limit".to_string(), "1".to_string()),
                (
                    "since".to_string(),
                    "2024-03-01T12:00:00.000000Z".to_string()
                ),
            ]
        );
    }

    #[test]
    fn limit_zero_short_circuits_to_empty() {
        assert_eq!(translate_queries(&["limit=0".to_string()]), None);
    }
}
