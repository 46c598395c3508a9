//! MQTT 3.1.1 wire codec for the implemented packet subset.

use thiserror::Error;

/// Largest value representable by the base-128 remaining-length varint.
pub const MAX_REMAINING_LENGTH: u32 = 268_435_455;

/// Decoded MQTT 3.1.1 control packet.
///
/// Invariants enforced by [`encode_packet`] and honored by [`decode_packet`]:
/// a QoS 0 PUBLISH carries no packet id, a QoS 1 PUBLISH carries one, and a
/// SUBSCRIBE carries a nonzero packet id and at least one filter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MqttPacket {
    Connect {
        client_id: String,
        clean_session: bool,
        keep_alive: u16,
    },
    ConnAck {
        session_present: bool,
        return_code: u8,
    },
    Publish {
        dup: bool,
        qos: u8,
        retain: bool,
        topic: String,
        packet_id: Option<u16>,
        payload: Vec<u8>,
    },
    PubAck {
        packet_id: u16,
    },
    Subscribe {
        packet_id: u16,
        /// `(topic_filter, requested_qos)` pairs.
        filters: Vec<(String, u8)>,
    },
    SubAck {
        packet_id: u16,
        /// Granted QoS per filter, or 0x80 for failure.
        return_codes: Vec<u8>,
    },
    PingReq,
    PingResp,
    Disconnect,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MqttCodecError {
    /// More bytes are required to decode a complete packet.
    #[error("packet is truncated")]
    Truncated,
    #[error("remaining length exceeds 4 encoded bytes")]
    Overlong,
    #[error("remaining length value {0} out of range")]
    OutOfRange(u64),
    #[error("unknown or unsupported packet type {0}")]
    UnknownPacketType(u8),
    #[error("malformed packet body: {0}")]
    MalformedBody(&'static str),
    #[error("packet violates an invariant: {0}")]
    InvariantViolation(&'static str),
}

/// Encodes `n` as the MQTT base-128 varint: 1..=4 bytes, low 7 bits per
/// byte little-endian by group, continuation bit 0x80 on all but the last.
pub fn encode_remaining_length(n: u32) -> Result<Vec<u8>, MqttCodecError> {
    if n > MAX_REMAINING_LENGTH {
        return Err(MqttCodecError::OutOfRange(n as u64));
    }
    let mut out = Vec::with_capacity(4);
    let mut x = n;
    loop {
        let mut byte = (x % 128) as u8;
        x /= 128;
        if x > 0 {
            byte |= 0x80;
        }
        out.push(byte);
        if x == 0 {
            break;
        }
    }
    Ok(out)
}

/// Decodes a remaining-length varint, returning `(value, bytes_consumed)`.
pub fn decode_remaining_length(bytes: &[u8]) -> Result<(u32, usize), MqttCodecError> {
    let mut value: u32 = 0;
    let mut multiplier: u32 = 1;
    for i in 0..4 {
        let byte = *bytes.get(i).ok_or(MqttCodecError::Truncated)?;
        value += (byte & 0x7F) as u32 * multiplier;
        if byte & 0x80 == 0 {
            return Ok((value, i + 1));
        }
        multiplier *= 128;
    }
    Err(MqttCodecError::Overlong)
}

fn push_string(out: &mut Vec<u8>, s: &str) -> Result<(), MqttCodecError> {
    if s.len() > u16::MAX as usize {
        return Err(MqttCodecError::InvariantViolation(
            "string longer than 65535 bytes",
        ));
    }
    out.extend_from_slice(&(s.len() as u16).to_be_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

/// Encodes a packet as fixed header byte, remaining-length varint, body.
pub fn encode_packet(packet: &MqttPacket) -> Result<Vec<u8>, MqttCodecError> {
    let mut body = Vec::new();
    let (packet_type, flags): (u8, u8) = match packet {
        MqttPacket::Connect {
            client_id,
            clean_session,
            keep_alive,
        } => {
            push_string(&mut body, "MQTT")?;
            body.push(0x04); // protocol level 3.1.1
            body.push(if *clean_session { 0x02 } else { 0x00 });
            body.extend_from_slice(&keep_alive.to_be_bytes());
            push_string(&mut body, client_id)?;
            (1, 0)
        }
        MqttPacket::ConnAck {
            session_present,
            return_code,
        } => {
            body.push(*session_present as u8);
            body.push(*return_code);
            (2, 0)
        }
        MqttPacket::Publish {
            dup,
            qos,
            retain,
            topic,
            packet_id,
            payload,
        } => {
            match (qos, packet_id) {
                (0, Some(_)) => {
                    return Err(MqttCodecError::InvariantViolation(
                        "qos 0 PUBLISH with packet id",
                    ))
                }
                (1, None) => {
                    return Err(MqttCodecError::InvariantViolation(
                        "qos 1 PUBLISH without packet id",
                    ))
                }
                (0..=1, _) => {}
                _ => {
                    return Err(MqttCodecError::InvariantViolation(
                        "qos above 1 unsupported",
                    ))
                }
            }
            push_string(&mut body, topic)?;
            if let Some(id) = packet_id {
                body.extend_from_slice(&id.to_be_bytes());
            }
            body.extend_from_slice(payload);
            (3, (*dup as u8) << 3 | qos << 1 | *retain as u8)
        }
        MqttPacket::PubAck { packet_id } => {
            body.extend_from_slice(&packet_id.to_be_bytes());
            (4, 0)
        }
        MqttPacket::Subscribe { packet_id, filters } => {
            if *packet_id == 0 {
                return Err(MqttCodecError::InvariantViolation(
                    "SUBSCRIBE packet id must be nonzero",
                ));
            }
            if filters.is_empty() {
                return Err(MqttCodecError::InvariantViolation(
                    "SUBSCRIBE needs at least one filter",
                ));
            }
            body.extend_from_slice(&packet_id.to_be_bytes());
            for (filter, qos) in filters {
                if *qos > 2 {
                    return Err(MqttCodecError::InvariantViolation("requested qos above 2"));
                }
                push_string(&mut body, filter)?;
                body.push(*qos);
            }
            (8, 0x02)
        }
        MqttPacket::SubAck {
            packet_id,
            return_codes,
        } => {
            body.extend_from_slice(&packet_id.to_be_bytes());
            body.extend_from_slice(return_codes);
            (9, 0)
        }
        MqttPacket::PingReq => (12, 0),
        MqttPacket::PingResp => (13, 0),
        MqttPacket::Disconnect => (14, 0),
    };

    let mut out = Vec::with_capacity(body.len() + 5);
    out.push(packet_type << 4 | flags);
    out.extend_from_slice(&encode_remaining_length(body.len() as u32)?);
    out.extend_from_slice(&body);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u8(&mut self) -> Result<u8, MqttCodecError> {
        let b = *self
            .bytes
            .get(self.pos)
            .ok_or(MqttCodecError::MalformedBody("body shorter than declared"))?;
        self.pos += 1;
        Ok(b)
    }

    fn u16(&mut self) -> Result<u16, MqttCodecError> {
        Ok(u16::from_be_bytes([self.u8()?, self.u8()?]))
    }

    fn string(&mut self) -> Result<String, MqttCodecError> {
        let len = self.u16()? as usize;
        let end = self.pos + len;
        let raw = self
            .bytes
            .get(self.pos..end)
            .ok_or(MqttCodecError::MalformedBody("string extends past body"))?;
        self.pos = end;
        String::from_utf8(raw.to_vec())
            .map_err(|_| MqttCodecError::MalformedBody("string is not UTF-8"))
    }

    fn rest(&mut self) -> Vec<u8> {
        let out = self.bytes[self.pos..].to_vec();
        self.pos = self.bytes.len();
        out
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

/// Decodes one packet from the front of `bytes`, returning it and the number
/// of bytes consumed. [`MqttCodecError::Truncated`] means a longer prefix of
/// the stream is needed; any other error is fatal for the connection.
pub fn decode_packet(bytes: &[u8]) -> Result<(MqttPacket, usize), MqttCodecError> {
    let first = *bytes.first().ok_or(MqttCodecError::Truncated)?;
    let (body_len, len_bytes) = decode_remaining_length(&bytes[1..])?;
    let header_len = 1 + len_bytes;
    let total = header_len + body_len as usize;
    if bytes.len() < total {
        return Err(MqttCodecError::Truncated);
    }

    let packet_type = first >> 4;
    let flags = first & 0x0F;
    let mut r = Reader {
        bytes: &bytes[header_len..total],
        pos: 0,
    };

    let packet = match packet_type {
        1 => {
            if flags != 0 {
                return Err(MqttCodecError::MalformedBody("CONNECT flags must be 0"));
            }
            let name = r.string()?;
            if name != "MQTT" {
                return Err(MqttCodecError::MalformedBody("bad protocol name"));
            }
            let level = r.u8()?;
            if level != 0x04 {
                return Err(MqttCodecError::MalformedBody("unsupported protocol level"));
            }
            let connect_flags = r.u8()?;
            if connect_flags & !0x02 != 0 {
                return Err(MqttCodecError::MalformedBody(
                    "will/username/password flags unsupported",
                ));
            }
            let keep_alive = r.u16()?;
            let client_id = r.string()?;
            MqttPacket::Connect {
                client_id,
                clean_session: connect_flags & 0x02 != 0,
                keep_alive,
            }
        }
        2 => {
            let ack_flags = r.u8()?;
            if ack_flags & !0x01 != 0 {
                return Err(MqttCodecError::MalformedBody("bad CONNACK flags"));
            }
            MqttPacket::ConnAck {
                session_present: ack_flags & 0x01 != 0,
                return_code: r.u8()?,
            }
        }
        3 => {
            let qos = (flags >> 1) & 0x03;
            if qos > 1 {
                return Err(MqttCodecError::MalformedBody("qos above 1 unsupported"));
            }
            let topic = r.string()?;
            let packet_id = if qos > 0 { Some(r.u16()?) } else { None };
            MqttPacket::Publish {
                dup: flags & 0x08 != 0,
                qos,
                retain: flags & 0x01 != 0,
                topic,
                packet_id,
                payload: r.rest(),
            }
        }
        4 => MqttPacket::PubAck {
            packet_id: r.u16()?,
        },
        8 => {
            if flags != 0x02 {
                return Err(MqttCodecError::MalformedBody(
                    "SUBSCRIBE flags must be 0b0010",
                ));
            }
            let packet_id = r.u16()?;
            if packet_id == 0 {
                return Err(MqttCodecError::MalformedBody(
                    "SUBSCRIBE packet id must be nonzero",
                ));
            }
            let mut filters = Vec::new();
            while !r.done() {
                let filter = r.string()?;
                let qos = r.u8()?;
                if qos > 2 {
                    return Err(MqttCodecError::MalformedBody("requested qos above 2"));
                }
                filters.push((filter, qos));
            }
            if filters.is_empty() {
                return Err(MqttCodecError::MalformedBody(
                    "SUBSCRIBE needs at least one filter",
                ));
            }
            MqttPacket::Subscribe { packet_id, filters }
        }
        9 => {
            let packet_id = r.u16()?;
            let return_codes = r.rest();
            if return_codes.is_empty() {
                return Err(MqttCodecError::MalformedBody("SUBACK needs return codes"));
            }
            MqttPacket::SubAck {
                packet_id,
                return_codes,
            }
        }
        12 => MqttPacket::PingReq,
        13 => MqttPacket::PingResp,
        14 => MqttPacket::Disconnect,
        other => return Err(MqttCodecError::UnknownPacketType(other)),
    };

    if !r.done() {
        return Err(MqttCodecError::MalformedBody("trailing bytes after body"));
    }
    Ok((packet, total))
}
