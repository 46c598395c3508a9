//! RFC 7252 message codec: 4-byte header, token, delta-encoded options,
//! 0xFF payload marker.

use thiserror::Error;

pub const OPTION_URI_PATH: u16 = 11;
pub const OPTION_CONTENT_FORMAT: u16 = 12;
pub const OPTION_URI_QUERY: u16 = 15;
/// Content-Format registry id for application/json.
pub const CONTENT_FORMAT_JSON: u16 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoapType {
    Con = 0,
    Non = 1,
    Ack = 2,
    Rst = 3,
}

impl CoapType {
    fn from_bits(bits: u8) -> CoapType {
        match bits & 0x03 {
            0 => CoapType::Con,
            1 => CoapType::Non,
            2 => CoapType::Ack,
            _ => CoapType::Rst,
        }
    }
}

/// CoAP code as `class.detail` (e.g. GET = 0.01, Created = 2.01).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoapCode {
    pub class: u8,
    pub detail: u8,
}

impl CoapCode {
    pub const EMPTY: CoapCode = CoapCode::new(0, 0);
    pub const GET: CoapCode = CoapCode::new(0, 1);
    pub const POST: CoapCode = CoapCode::new(0, 2);
    pub const CREATED: CoapCode = CoapCode::new(2, 1);
    pub const CONTENT: CoapCode = CoapCode::new(2, 5);
    pub const BAD_REQUEST: CoapCode = CoapCode::new(4, 0);
    pub const NOT_FOUND: CoapCode = CoapCode::new(4, 4);
    pub const INTERNAL_SERVER_ERROR: CoapCode = CoapCode::new(5, 0);
    pub const SERVICE_UNAVAILABLE: CoapCode = CoapCode::new(5, 3);

    pub const fn new(class: u8, detail: u8) -> CoapCode {
        CoapCode { class, detail }
    }

    pub const fn byte(self) -> u8 {
        self.class << 5 | self.detail
    }

    pub const fn from_byte(byte: u8) -> CoapCode {
        CoapCode {
            class: byte >> 5,
            detail: byte & 0x1F,
        }
    }

    pub const fn is_request(self) -> bool {
        self.class == 0 && self.detail != 0
    }

    pub const fn is_empty(self) -> bool {
        self.class == 0 && self.detail == 0
    }
}

impl std::fmt::Display for CoapCode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{:02}", self.class, self.detail)
    }
}

/// Decoded CoAP message (version is always 1 on the wire).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoapMessage {
    pub msg_type: CoapType,
    pub code: CoapCode,
    pub message_id: u16,
    /// 0..=8 bytes.
    pub token: Vec<u8>,
    /// `(number, value)` pairs, ascending by number; repeats keep insertion
    /// order (Uri-Path segments, Uri-Query parameters).
    pub options: Vec<(u16, Vec<u8>)>,
    pub payload: Vec<u8>,
}

impl CoapMessage {
    pub fn new(msg_type: CoapType, code: CoapCode, message_id: u16) -> CoapMessage {
        CoapMessage {
            msg_type,
            code,
            message_id,
            token: Vec::new(),
            options: Vec::new(),
            payload: Vec::new(),
        }
    }

    /// Inserts an option keeping the list ascending; equal numbers append
    /// after existing entries so repeated options preserve order.
    pub fn add_option(&mut self, number: u16, value: Vec<u8>) {
        let at = self.options.partition_point(|(n, _)| *n <= number);
        self.options.insert(at, (number, value));
    }

    pub fn with_token(mut self, token: Vec<u8>) -> CoapMessage {
        self.token = token;
        self
    }

    pub fn with_path(mut self, path: &str) -> CoapMessage {
        for segment in path.split('/').filter(|s| !s.is_empty()) {
            self.add_option(OPTION_URI_PATH, segment.as_bytes().to_vec());
        }
        self
    }

    pub fn with_query(mut self, key: &str, value: &str) -> CoapMessage {
        self.add_option(OPTION_URI_QUERY, format!("{key}={value}").into_bytes());
        self
    }

    pub fn with_payload(mut self, payload: Vec<u8>, content_format: Option<u16>) -> CoapMessage {
        if let Some(cf) = content_format {
            self.add_option(OPTION_CONTENT_FORMAT, cf.to_be_bytes().to_vec());
        }
        self.payload = payload;
        self
    }

    /// Uri-Path segments joined with `/` (no leading slash).
    pub fn path(&self) -> String {
        self.options
            .iter()
            .filter(|(n, _)| *n == OPTION_URI_PATH)
            .map(|(_, v)| String::from_utf8_lossy(v).into_owned())
            .collect::<Vec<_>>()
            .join("/")
    }

    /// Uri-Query options as raw `key=value` strings, in order.
    pub fn queries(&self) -> Vec<String> {
        self.options
            .iter()
            .filter(|(n, _)| *n == OPTION_URI_QUERY)
            .map(|(_, v)| String::from_utf8_lossy(v).into_owned())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoapCodecError {
    #[error("datagram is truncated")]
    Truncated,
    #[error("version bits are not 1")]
    BadVersion,
    #[error("token length {0} exceeds 8")]
    BadTokenLength(u8),
    #[error("malformed option encoding: {0}")]
    MalformedOption(&'static str),
    #[error("message violates an invariant: {0}")]
    InvariantViolation(&'static str),
}

fn push_extended(out: &mut Vec<u8>, value: u16) -> u8 {
    // Returns the nibble and appends any extended bytes.
    if value < 13 {
        value as u8
    } else if value < 269 {
        out.push((value - 13) as u8);
        13
    } else {
        out.extend_from_slice(&(value - 269).to_be_bytes());
        14
    }
}

/// Encodes a message to its datagram form.
pub fn encode_coap(message: &CoapMessage) -> Result<Vec<u8>, CoapCodecError> {
    if message.token.len() > 8 {
        return Err(CoapCodecError::InvariantViolation(
            "token longer than 8 bytes",
        ));
    }
    if message.code.class > 7 || message.code.detail > 31 {
        return Err(CoapCodecError::InvariantViolation("code out of range"));
    }
    if message.options.windows(2).any(|w| w[0].0 > w[1].0) {
        return Err(CoapCodecError::InvariantViolation(
            "options not sorted by number",
        ));
    }

    let mut out = Vec::with_capacity(4 + message.token.len() + message.payload.len() + 8);
    out.push(0x40 | (message.msg_type as u8) << 4 | message.token.len() as u8);
    out.push(message.code.byte());
    out.extend_from_slice(&message.message_id.to_be_bytes());
    out.extend_from_slice(&message.token);

    let mut previous = 0u16;
    for (number, value) in &message.options {
        if value.len() > u16::MAX as usize - 269 {
            return Err(CoapCodecError::InvariantViolation("option value too long"));
        }
        // Extended delta bytes precede extended length bytes on the wire.
        let mut ext = Vec::new();
        let delta_nibble = push_extended(&mut ext, number - previous);
        let len_nibble = push_extended(&mut ext, value.len() as u16);
        out.push(delta_nibble << 4 | len_nibble);
        out.extend_from_slice(&ext);
        out.extend_from_slice(value);
        previous = *number;
    }

    if !message.payload.is_empty() {
        out.push(0xFF);
        out.extend_from_slice(&message.payload);
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u8(&mut self) -> Result<u8, CoapCodecError> {
        let b = *self.bytes.get(self.pos).ok_or(CoapCodecError::Truncated)?;
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CoapCodecError> {
        let end = self.pos + n;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or(CoapCodecError::Truncated)?;
        self.pos = end;
        Ok(slice)
    }

    fn extended(&mut self, nibble: u8) -> Result<u16, CoapCodecError> {
        match nibble {
            0..=12 => Ok(nibble as u16),
            13 => Ok(self.u8()? as u16 + 13),
            14 => Ok(u16::from_be_bytes([self.u8()?, self.u8()?]) + 269),
            _ => Err(CoapCodecError::MalformedOption("reserved nibble 15")),
        }
    }
}

/// Decodes one datagram. The whole buffer must be a single message.
pub fn decode_coap(bytes: &[u8]) -> Result<CoapMessage, CoapCodecError> {
    if bytes.len() < 4 {
        return Err(CoapCodecError::Truncated);
    }
    let mut r = Reader { bytes, pos: 0 };
    let first = r.u8()?;
    if first >> 6 != 1 {
        return Err(CoapCodecError::BadVersion);
    }
    let msg_type = CoapType::from_bits(first >> 4);
    let tkl = first & 0x0F;
    if tkl > 8 {
        return Err(CoapCodecError::BadTokenLength(tkl));
    }
    let code = CoapCode::from_byte(r.u8()?);
    let message_id = u16::from_be_bytes([r.u8()?, r.u8()?]);
    let token = r.take(tkl as usize)?.to_vec();

    let mut options = Vec::new();
    let mut number = 0u16;
    let mut payload = Vec::new();
    while r.pos < bytes.len() {
        let byte = r.u8()?;
        if byte == 0xFF {
            if r.pos == bytes.len() {
                return Err(CoapCodecError::Truncated); // marker with empty payload
            }
            payload = bytes[r.pos..].to_vec();
            break;
        }
        let delta = r.extended(byte >> 4)?;
        let length = r.extended(byte & 0x0F)?;
        number = number
            .checked_add(delta)
            .ok_or(CoapCodecError::MalformedOption("option number overflow"))?;
        options.push((number, r.take(length as usize)?.to_vec()));
    }

    Ok(CoapMessage {
        msg_type,
        code,
        message_id,
        token,
        options,
        payload,
    })
}
