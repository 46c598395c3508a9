//! Minimal MQTT 3.1.1 implementation: wire codec, topic filter matching,
//! an embedded broker over TCP, and publisher/subscriber clients.
//!
//! Scope is the packet subset the publish/subscribe experiment needs:
//! CONNECT/CONNACK, PUBLISH/PUBACK (QoS 0 and 1), SUBSCRIBE/SUBACK,
//! PINGREQ/PINGRESP, DISCONNECT. QoS 2, retained messages, wills,
//! persistent sessions, and keep-alive enforcement are out of scope.

pub mod broker;
pub mod client;
pub mod codec;
pub mod topic;

pub use broker::{BrokerState, MqttBroker, StepOutcome};
pub use client::{MqttClientError, MqttPublisher, MqttSubscriber, SubscriberEvent};
pub use codec::{
    decode_packet, decode_remaining_length, encode_packet, encode_remaining_length, MqttCodecError,
    MqttPacket, MAX_REMAINING_LENGTH,
};
pub use topic::{topic_matches, validate_filter, validate_topic, InvalidFilter};
