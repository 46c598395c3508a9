//! Shared fixtures for the integration suites: an in-process stack
//! (broker + middleware + both gateways) on loopback ephemeral ports.

#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use hetbridge::gateway::{CoapGateway, ForwardConfig, Forwarder, GatewayConfig, MqttGateway};
use hetbridge::middleware::MiddlewareServer;
use hetbridge::mqtt::MqttBroker;
use hetbridge::storage::Store;

/// Full in-process deployment. Field order gives the ordered teardown:
/// gateways first, then middleware, then broker.
pub struct Stack {
    pub mqtt_gateway: MqttGateway,
    pub coap_gateway: CoapGateway,
    pub middleware: MiddlewareServer,
    pub broker: MqttBroker,
    pub store: Arc<Store>,
    pub middleware_url: String,
    pub broker_addr: String,
    pub coap_addr: String,
}

pub async fn start_stack(token_ttl: Duration) -> Stack {
    let store = Arc::new(Store::new());
    let middleware = MiddlewareServer::bind("127.0.0.1:0", store.clone(), token_ttl)
        .await
        .expect("middleware binds");
    let broker = MqttBroker::bind("127.0.0.1:0").await.expect("broker binds");

    let mut cfg = GatewayConfig::for_middleware(middleware.base_url());
    cfg.mqtt.broker_addr = broker.local_addr().to_string();
    cfg.coap.bind_addr = "127.0.0.1:0".into();

    let mqtt_forwarder = Arc::new(
        Forwarder::register(
            &cfg.middleware_base_url,
            "mqtt-gw",
            ForwardConfig::default(),
        )
        .await
        .expect("mqtt gateway registers"),
    );
    let coap_forwarder = Arc::new(
        Forwarder::register(
            &cfg.middleware_base_url,
            "coap-gw",
            ForwardConfig::default(),
        )
        .await
        .expect("coap gateway registers"),
    );

    let coap_gateway = CoapGateway::start(&cfg.coap, coap_forwarder)
        .await
        .expect("coap gateway starts");
    let mqtt_gateway = MqttGateway::start(&cfg.mqtt, mqtt_forwarder)
        .await
        .expect("mqtt gateway starts");

    Stack {
        middleware_url: middleware.base_url(),
        broker_addr: broker.local_addr().to_string(),
        coap_addr: coap_gateway.local_addr().to_string(),
        mqtt_gateway,
        coap_gateway,
        middleware,
        broker,
        store,
    }
}

/// Polls `check` every 20 ms until it returns true or `deadline` elapses.
pub async fn wait_for(deadline: Duration, mut check: impl FnMut() -> bool) -> bool {
    let end = tokio::time::Instant::now() + deadline;
    loop {
        if check() {
            return true;
        }
        if tokio::time::Instant::now() >= end {
            return false;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}
