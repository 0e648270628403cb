//! Length-prefixed framing for handshake messages.
//!
//! ```text
//! version:u8 = 0x01 | type:u8 | length:u32 (big-endian) | payload[length]
//! ```
//!
//! DH payloads are exactly one element encoding, confirmation payloads are
//! 32 bytes, tag sets are a big-endian `u16` count followed by `count * 32`
//! bytes.

use std::fmt;
use std::io::{self, Read, Write};

use thiserror::Error;

use crate::handshake::Role;
use crate::kdf::{Tag, DIGEST_LEN};

pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 6;
pub const MAX_TAGS: usize = u16::MAX as usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageType {
    DhSingle = 0x01,
    ConfirmInitiator = 0x02,
    ConfirmResponder = 0x03,
    DhMulti = 0x11,
    TagSetInitiator = 0x12,
    TagSetResponder = 0x13,
}

impl MessageType {
    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0x01 => Self::DhSingle,
            0x02 => Self::ConfirmInitiator,
            0x03 => Self::ConfirmResponder,
            0x11 => Self::DhMulti,
            0x12 => Self::TagSetInitiator,
            0x13 => Self::TagSetResponder,
            _ => return None,
        })
    }

    pub fn is_dh(self) -> bool {
        matches!(self, Self::DhSingle | Self::DhMulti)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::DhSingle => "DH_SINGLE",
            Self::ConfirmInitiator => "CONFIRM_I",
            Self::ConfirmResponder => "CONFIRM_R",
            Self::DhMulti => "DH_MULTI",
            Self::TagSetInitiator => "TAGSET_I",
            Self::TagSetResponder => "TAGSET_R",
        }
    }

    fn max_payload(self, element_width: usize) -> usize {
        match self {
            Self::DhSingle | Self::DhMulti => element_width,
            Self::ConfirmInitiator | Self::ConfirmResponder => DIGEST_LEN,
            Self::TagSetInitiator | Self::TagSetResponder => 2 + MAX_TAGS * DIGEST_LEN,
        }
    }
}

impl fmt::Display for MessageType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatCategory {
    Version,
    Type,
    Length,
    Truncation,
}

impl fmt::Display for FormatCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Version => "version",
            Self::Type => "type",
            Self::Length => "length",
            Self::Truncation => "truncation",
        })
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("malformed message ({category}): {detail}")]
pub struct FormatError {
    pub category: FormatCategory,
    pub detail: String,
}

impl FormatError {
    fn new(category: FormatCategory, detail: impl Into<String>) -> Self {
        Self {
            category,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct WireMessage {
    pub msg_type: MessageType,
    pub payload: Vec<u8>,
}

impl fmt::Debug for WireMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({} bytes)", self.msg_type, self.payload.len())
    }
}

impl WireMessage {
    pub fn new(msg_type: MessageType, payload: Vec<u8>) -> Self {
        Self { msg_type, payload }
    }

    pub fn confirm(sender: Role, tag: &[u8; DIGEST_LEN]) -> Self {
        let msg_type = match sender {
            Role::Initiator => MessageType::ConfirmInitiator,
            Role::Responder => MessageType::ConfirmResponder,
        };
        Self::new(msg_type, tag.to_vec())
    }

    pub fn tag_set(sender: Role, tags: &[Tag]) -> Self {
        assert!(tags.len() <= MAX_TAGS, "tag count exceeds u16");
        let msg_type = match sender {
            Role::Initiator => MessageType::TagSetInitiator,
            Role::Responder => MessageType::TagSetResponder,
        };
        let mut payload = Vec::with_capacity(2 + tags.len() * DIGEST_LEN);
        payload.extend_from_slice(&(tags.len() as u16).to_be_bytes());
        for t in tags {
            payload.extend_from_slice(t.as_bytes());
        }
        Self::new(msg_type, payload)
    }

    /// Confirmation tag carried by a `CONFIRM_*` message.
    pub fn confirm_tag(&self) -> Result<Tag, FormatError> {
        let bytes: [u8; DIGEST_LEN] = self.payload.as_slice().try_into().map_err(|_| {
            FormatError::new(
                FormatCategory::Length,
                format!("confirmation is {} bytes", self.payload.len()),
            )
        })?;
        Ok(Tag::from_bytes(bytes))
    }

    /// Tags carried by a `TAGSET_*` message.
    pub fn tags(&self) -> Result<Vec<Tag>, FormatError> {
        check_tag_set(&self.payload)?;
        Ok(self.payload[2..]
            .chunks_exact(DIGEST_LEN)
            .map(|c| Tag::from_bytes(c.try_into().expect("exact chunk")))
            .collect())
    }
}

fn check_tag_set(payload: &[u8]) -> Result<usize, FormatError> {
    if payload.len() < 2 {
        return Err(FormatError::new(FormatCategory::Length, "tag set lacks count"));
    }
    let count = u16::from_be_bytes([payload[0], payload[1]]) as usize;
    let body = payload.len() - 2;
    if body != count * DIGEST_LEN {
        return Err(FormatError::new(
            FormatCategory::Length,
            format!("count {count} but {body} tag bytes"),
        ));
    }
    Ok(count)
}

pub fn encode(msg: &WireMessage) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + msg.payload.len());
    out.push(VERSION);
    out.push(msg.msg_type as u8);
    out.extend_from_slice(&(msg.payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&msg.payload);
    out
}

fn parse_header(header: &[u8; HEADER_LEN], element_width: usize) -> Result<(MessageType, usize), FormatError> {
    if header[0] != VERSION {
        return Err(FormatError::new(
            FormatCategory::Version,
            format!("version 0x{:02x}", header[0]),
        ));
    }
    let msg_type = MessageType::from_byte(header[1]).ok_or_else(|| {
        FormatError::new(FormatCategory::Type, format!("type 0x{:02x}", header[1]))
    })?;
    let len = u32::from_be_bytes([header[2], header[3], header[4], header[5]]) as usize;
    if len > msg_type.max_payload(element_width) {
        return Err(FormatError::new(
            FormatCategory::Length,
            format!("{msg_type} payload of {len} bytes"),
        ));
    }
    Ok((msg_type, len))
}

fn check_payload(msg_type: MessageType, payload: &[u8], element_width: usize) -> Result<(), FormatError> {
    let len = payload.len();
    let expected = match msg_type {
        MessageType::DhSingle | MessageType::DhMulti => element_width,
        MessageType::ConfirmInitiator | MessageType::ConfirmResponder => DIGEST_LEN,
        MessageType::TagSetInitiator | MessageType::TagSetResponder => {
            check_tag_set(payload)?;
            return Ok(());
        }
    };
    if len != expected {
        return Err(FormatError::new(
            FormatCategory::Length,
            format!("{msg_type} payload is {len} bytes, expected {expected}"),
        ));
    }
    Ok(())
}

/// Decodes exactly one message occupying all of `buf`.
pub fn decode(buf: &[u8], element_width: usize) -> Result<WireMessage, FormatError> {
    let header: &[u8; HEADER_LEN] = buf
        .get(..HEADER_LEN)
        .and_then(|h| h.try_into().ok())
        .ok_or_else(|| FormatError::new(FormatCategory::Truncation, "short header"))?;
    let (msg_type, len) = parse_header(header, element_width)?;
    let body = &buf[HEADER_LEN..];
    if body.len() < len {
        return Err(FormatError::new(
            FormatCategory::Truncation,
            format!("{} of {len} payload bytes", body.len()),
        ));
    }
    if body.len() > len {
        return Err(FormatError::new(
            FormatCategory::Length,
            format!("{} trailing bytes", body.len() - len),
        ));
    }
    check_payload(msg_type, body, element_width)?;
    Ok(WireMessage::new(msg_type, body.to_vec()))
}

#[derive(Debug, Error)]
pub enum ReadError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Reads one framed message from a stream. A stream ending mid-message is a
/// truncation error; a stream ending before any byte is `UnexpectedEof`.
pub fn read_message(reader: &mut impl Read, element_width: usize) -> Result<WireMessage, ReadError> {
    let mut header = [0u8; HEADER_LEN];
    let mut filled = 0;
    while filled < HEADER_LEN {
        match reader.read(&mut header[filled..])? {
            0 if filled == 0 => return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into()),
            0 => return Err(FormatError::new(FormatCategory::Truncation, "short header").into()),
            n => filled += n,
        }
    }
    let (msg_type, len) = parse_header(&header, element_width)?;
    let mut payload = vec![0u8; len];
    reader.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => {
            ReadError::Format(FormatError::new(FormatCategory::Truncation, "short payload"))
        }
        _ => ReadError::Io(e),
    })?;
    check_payload(msg_type, &payload, element_width)?;
    Ok(WireMessage::new(msg_type, payload))
}

pub fn write_message(writer: &mut impl Write, msg: &WireMessage) -> io::Result<()> {
    writer.write_all(&encode(msg))?;
    writer.flush()
}
