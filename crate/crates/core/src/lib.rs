//! hetbridge: heterogeneous IoT device traffic (MQTT and CoAP) through
//! protocol gateways into a REST middleware backed by an embedded
//! time-series store, plus a fleet simulator and latency/fairness analysis.

pub mod analysis;
pub mod coap;
pub mod demo;
pub mod gateway;
pub mod middleware;
pub mod model;
pub mod mqtt;
pub mod simulator;
pub mod storage;
