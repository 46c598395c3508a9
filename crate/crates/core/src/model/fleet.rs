use serde::{Deserialize, Serialize};
use thiserror::Error;

fn default_interval_ms() -> u64 {
    1000
}

/// Simulation parameters for one fleet run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FleetConfig {
    pub mqtt_devices: u32,
    pub coap_devices: u32,
    #[serde(default = "default_interval_ms")]
    pub interval_ms: u64,
    pub duration_s: u64,
    #[serde(default)]
    pub qos: u8,
    /// Pin every device's first tick to the same instant instead of a
    /// random phase offset in `[0, interval)`.
    #[serde(default)]
    pub aligned: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FleetConfigError {
    #[error("fleet needs at least one device")]
    NoDevices,
    #[error("interval_ms must be positive")]
    ZeroInterval,
    #[error("duration_s must be positive")]
    ZeroDuration,
    #[error("qos must be 0 or 1, got {0}")]
    BadQos(u8),
}

impl FleetConfig {
    pub fn validate(&self) -> Result<(), FleetConfigError> {
        if self.mqtt_devices + self.coap_devices == 0 {
            return Err(FleetConfigError::NoDevices);
        }
        if self.interval_ms == 0 {
            return Err(FleetConfigError::ZeroInterval);
        }
        if self.duration_s == 0 {
            return Err(FleetConfigError::ZeroDuration);
        }
        if self.qos > 1 {
            return Err(FleetConfigError::BadQos(self.qos));
        }
        Ok(())
    }

    /// Ticks each device fires: `floor(duration_ms / interval_ms)`.
    pub fn ticks_per_device(&self) -> u64 {
        self.duration_s * 1000 / self.interval_ms
    }
}

impl Default for FleetConfig {
    fn default() -> Self {
        FleetConfig {
            mqtt_devices: 5,
            coap_devices: 5,
            interval_ms: 1000,
            duration_s: 30,
            qos: 0,
            aligned: false,
        }
    }
}
