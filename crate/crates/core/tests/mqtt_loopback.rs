//! Broker/client integration over real loopback TCP.

use std::time::Duration;

use hetbridge::mqtt::{
    MqttBroker, MqttClientError, MqttPublisher, MqttSubscriber, SubscriberEvent,
};

async fn broker() -> MqttBroker {
    MqttBroker::bind("127.0.0.1:0").await.expect("broker binds")
}

async fn expect_message(subscriber: &mut MqttSubscriber) -> (String, Vec<u8>) {
    match tokio::time::timeout(Duration::from_secs(2), subscriber.recv())
        .await
        .expect("delivery within 2s")
        .expect("subscription alive")
    {
        SubscriberEvent::Message { topic, payload } => (topic, payload),
        SubscriberEvent::ConnectionLost(reason) => panic!("connection lost: {reason}"),
    }
}

#[tokio::test]
async fn publish_reaches_matching_subscriber() {
    let broker = broker().await;
    let addr = broker.local_addr().to_string();

    let mut subscriber = MqttSubscriber::connect(&addr, "gw", &["iot/+/data"])
        .await
        .unwrap();
    let mut publisher = MqttPublisher::connect(&addr, "dev").await.unwrap();
    publisher.publish("iot/x/data", b"hello", 0).await.unwrap();

    let (topic, payload) = expect_message(&mut subscriber).await;
    assert_eq!(topic, "iot/x/data");
    assert_eq!(payload, b"hello");

    // Non-matching topic is not delivered.
    publisher.publish("other/topic", b"nope", 0).await.unwrap();
    publisher.publish("iot/y/data", b"second", 0).await.unwrap();
    let (topic, payload) = expect_message(&mut subscriber).await;
    assert_eq!(topic, "iot/y/data");
    assert_eq!(payload, b"second");
}

#[tokio::test]
async fn one_hundred_publishes_arrive_in_order() {
    let broker = broker().await;
    let addr = broker.local_addr().to_string();

    let mut subscriber = MqttSubscriber::connect(&addr, "gw", &["seq/#"])
        .await
        .unwrap();
    let mut publisher = MqttPublisher::connect(&addr, "dev").await.unwrap();
    for i in 0..100 {
        publisher
            .publish("seq/topic", format!("m-{i}").as_bytes(), 0)
            .await
            .unwrap();
    }
    for i in 0..100 {
        let (_, payload) = expect_message(&mut subscriber).await;
        assert_eq!(payload, format!("m-{i}").as_bytes(), "out of order at {i}");
    }
}

#[tokio::test]
async fn qos1_publish_returns_after_puback() {
    let broker = broker().await;
    let addr = broker.local_addr().to_string();

    let mut publisher = MqttPublisher::connect(&addr, "dev").await.unwrap();
    // No subscribers: the broker still acks qos 1.
    publisher.publish("iot/x/data", b"acked", 1).await.unwrap();

    // And with a subscriber, delivery is downgraded to qos 0 while the
    // publisher still gets its ack.
    let mut subscriber = MqttSubscriber::connect(&addr, "gw", &["iot/+/data"])
        .await
        .unwrap();
    publisher.publish("iot/x/data", b"again", 1).await.unwrap();
    let (_, payload) = expect_message(&mut subscriber).await;
    assert_eq!(payload, b"again");
}

#[tokio::test]
async fn connecting_to_closed_port_is_refused() {
    // Bind-then-drop to get a port nothing listens on.
    let sacrifice = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = sacrifice.local_addr().unwrap().to_string();
    drop(sacrifice);

    match MqttPublisher::connect(&addr, "dev").await {
        Err(MqttClientError::ConnectionRefused(_)) => {}
        Err(other) => panic!("expected ConnectionRefused, got {other:?}"),
        Ok(_) => panic!("expected ConnectionRefused, connect succeeded"),
    }
}

#[tokio::test]
async fn invalid_filter_is_rejected_client_side() {
    let broker = broker().await;
    let addr = broker.local_addr().to_string();
    match MqttSubscriber::connect(&addr, "gw", &["a/#/b"]).await {
        Err(MqttClientError::InvalidFilter(_)) => {}
        Err(other) => panic!("expected InvalidFilter, got {other:?}"),
        Ok(_) => panic!("expected InvalidFilter, subscribe succeeded"),
    }
}

#[tokio::test]
async fn duplicate_client_id_evicts_the_older_session() {
    let broker = broker().await;
    let addr = broker.local_addr().to_string();

    let mut first = MqttSubscriber::connect(&addr, "same-id", &["#"])
        .await
        .unwrap();
    let _second = MqttSubscriber::connect(&addr, "same-id", &["#"])
        .await
        .unwrap();

    match tokio::time::timeout(Duration::from_secs(2), first.recv())
        .await
        .expect("eviction notice within 2s")
    {
        Some(SubscriberEvent::ConnectionLost(_)) | None => {}
        Some(SubscriberEvent::Message { topic, .. }) => {
            panic!("expected eviction, got message on {topic}")
        }
    }
}

#[tokio::test]
async fn two_subscribers_each_get_one_copy() {
    let broker = broker().await;
    let addr = broker.local_addr().to_string();

    let mut sub_a = MqttSubscriber::connect(&addr, "a", &["t/#", "t/+"])
        .await
        .unwrap();
    let mut sub_b = MqttSubscriber::connect(&addr, "b", &["t/x"]).await.unwrap();
    let mut publisher = MqttPublisher::connect(&addr, "dev").await.unwrap();

    publisher.publish("t/x", b"fanout", 0).await.unwrap();
    publisher.publish("t/x", b"next", 0).await.unwrap();

    // Overlapping filters on one session still yield exactly one copy:
    // the second event sub_a sees must already be the second publish.
    let (_, payload) = expect_message(&mut sub_a).await;
    assert_eq!(payload, b"fanout");
    let (_, payload) = expect_message(&mut sub_a).await;
    assert_eq!(payload, b"next");

    let (_, payload) = expect_message(&mut sub_b).await;
    assert_eq!(payload, b"fanout");
}
