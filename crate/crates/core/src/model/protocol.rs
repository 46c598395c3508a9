use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which wire protocol a reading originally arrived over.
///
/// Serializes as lowercase `"mqtt"` / `"coap"` everywhere (JSON bodies,
/// CSV columns, query parameters).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Mqtt,
    Coap,
}

impl Protocol {
    pub const ALL: [Protocol; 2] = [Protocol::Mqtt, Protocol::Coap];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Mqtt => "mqtt",
            Protocol::Coap => "coap",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown protocol {0:?}, expected \"mqtt\" or \"coap\"")]
pub struct ProtocolParseError(pub String);

impl FromStr for Protocol {
    type Err = ProtocolParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mqtt" => Ok(Protocol::Mqtt),
            "coap" => Ok(Protocol::Coap),
            other => Err(ProtocolParseError(other.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serializes_lowercase() {
        assert_eq!(serde_json::to_string(&Protocol::Mqtt).unwrap(), "\"mqtt\"");
        assert_eq!(serde_json::to_string(&Protocol::Coap).unwrap(), "\"coap\"");
    }

    #[test]
    fn rejects_unknown_names() {
        assert!("ftp".parse::<Protocol>().is_err());
        assert!("MQTT".parse::<Protocol>().is_err());
        assert_eq!("coap".parse::<Protocol>().unwrap(), Protocol::Coap);
    }
}
