//! Protocol gateways: normalize heterogeneous device messages into
//! canonical records, forward them to the middleware over HTTP, and expose
//! the reverse (query) paths that make cross-protocol retrieval work.

pub mod coap_gateway;
pub mod forward;
pub mod mqtt_gateway;
pub mod normalize;

pub use coap_gateway::CoapGateway;
pub use forward::{ForwardConfig, ForwardError, ForwardSummary, Forwarder, GatewayStats};
pub use mqtt_gateway::MqttGateway;
pub use normalize::{normalize_coap, normalize_mqtt, NormalizeError};

/// Gateway wiring. Field defaults encode the topic and path conventions
/// the rest of the system relies on.
#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub middleware_base_url: String,
    pub mqtt: MqttGatewaySettings,
    pub coap: CoapGatewaySettings,
    pub forward_retry: ForwardConfig,
}

#[derive(Debug, Clone)]
pub struct MqttGatewaySettings {
    pub broker_addr: String,
    pub client_id: String,
    pub subscribe_filter: String,
    pub query_filter: String,
    pub response_prefix: String,
}

impl Default for MqttGatewaySettings {
    fn default() -> Self {
        MqttGatewaySettings {
            broker_addr: "127.0.0.1:1883".into(),
            client_id: "mqtt-gw".into(),
            subscribe_filter: "iot/+/data".into(),
            query_filter: "iot/query/+".into(),
            response_prefix: "iot/response/".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoapGatewaySettings {
    pub bind_addr: String,
    pub ingest_path: String,
    pub readings_path: String,
}

impl Default for CoapGatewaySettings {
    fn default() -> Self {
        CoapGatewaySettings {
            bind_addr: "127.0.0.1:5683".into(),
            ingest_path: "ingest".into(),
            readings_path: "readings".into(),
        }
    }
}

impl GatewayConfig {
    pub fn for_middleware(middleware_base_url: impl Into<String>) -> GatewayConfig {
        GatewayConfig {
            middleware_base_url: middleware_base_url.into(),
            mqtt: MqttGatewaySettings::default(),
            coap: CoapGatewaySettings::default(),
            forward_retry: ForwardConfig::default(),
        }
    }

    /// The query/response topics must both end in a client-id level.
    pub fn validate(&self) -> Result<(), String> {
        if !self.mqtt.query_filter.ends_with("/+") {
            return Err("query_filter must end with a '/+' client-id level".into());
        }
        if !self.mqtt.response_prefix.ends_with('/') {
            return Err("response_prefix must end with '/'".into());
        }
        Ok(())
    }
}
