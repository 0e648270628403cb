//! Byte-level record of a session and the format verifier for it.

use thiserror::Error;

use crate::group::{validate_element, GroupError, GroupParams};
use crate::handshake::{Protocol, Role};
use crate::wire::{decode, FormatError, MessageType, WireMessage};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub sender: Role,
    pub frame: Vec<u8>,
}

/// Frames in the order they were sent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    pub protocol: Protocol,
    pub entries: Vec<TranscriptEntry>,
}

/// Traffic volume of a transcript.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrafficCount {
    pub messages: usize,
    pub elements: usize,
    pub tags: usize,
}

impl std::ops::AddAssign for TrafficCount {
    fn add_assign(&mut self, rhs: Self) {
        self.messages += rhs.messages;
        self.elements += rhs.elements;
        self.tags += rhs.tags;
    }
}

impl Transcript {
    pub fn new(protocol: Protocol) -> Self {
        Self {
            protocol,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, sender: Role, frame: Vec<u8>) {
        self.entries.push(TranscriptEntry { sender, frame });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Decodes every frame; fails on the first malformed one.
    pub fn messages(&self, element_width: usize) -> Result<Vec<(Role, WireMessage)>, FormatError> {
        self.entries
            .iter()
            .map(|e| decode(&e.frame, element_width).map(|m| (e.sender, m)))
            .collect()
    }

    /// Counts group elements and tags (confirmations and tag-set entries)
    /// among well-formed frames.
    pub fn traffic(&self, element_width: usize) -> TrafficCount {
        let mut count = TrafficCount::default();
        for entry in &self.entries {
            let Ok(msg) = decode(&entry.frame, element_width) else {
                continue;
            };
            count.messages += 1;
            match msg.msg_type {
                t if t.is_dh() => count.elements += 1,
                MessageType::ConfirmInitiator | MessageType::ConfirmResponder => count.tags += 1,
                _ => count.tags += msg.tags().map(|t| t.len()).unwrap_or(0),
            }
        }
        count
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TranscriptError {
    #[error("expected {expected} messages, found {found}")]
    Count { expected: usize, found: usize },
    #[error("message {index}: expected {expected} from {sender:?}")]
    Sequence {
        index: usize,
        expected: MessageType,
        sender: Role,
    },
    #[error("message {index}: {source}")]
    Format { index: usize, source: FormatError },
    #[error("message {index}: {source}")]
    Element { index: usize, source: GroupError },
    #[error("message {index}: {found} tags, expected {expected}")]
    TagCount {
        index: usize,
        expected: usize,
        found: usize,
    },
}

/// Checks that `transcript` has the exact shape of a completed run:
/// message order, senders, framing, valid DH elements and, for the multi
/// protocol, exactly `m` tags per direction.
pub fn verify_transcript(
    transcript: &Transcript,
    params: &GroupParams,
    m: usize,
) -> Result<(), TranscriptError> {
    let expected: [(Role, MessageType); 4] = match transcript.protocol {
        Protocol::Single => [
            (Role::Initiator, MessageType::DhSingle),
            (Role::Responder, MessageType::DhSingle),
            (Role::Initiator, MessageType::ConfirmInitiator),
            (Role::Responder, MessageType::ConfirmResponder),
        ],
        Protocol::Multi => [
            (Role::Initiator, MessageType::DhMulti),
            (Role::Responder, MessageType::DhMulti),
            (Role::Initiator, MessageType::TagSetInitiator),
            (Role::Responder, MessageType::TagSetResponder),
        ],
    };
    if transcript.len() != expected.len() {
        return Err(TranscriptError::Count {
            expected: expected.len(),
            found: transcript.len(),
        });
    }
    for (index, (entry, (sender, msg_type))) in transcript.entries.iter().zip(expected).enumerate() {
        let msg = decode(&entry.frame, params.element_width())
            .map_err(|source| TranscriptError::Format { index, source })?;
        if entry.sender != sender || msg.msg_type != msg_type {
            return Err(TranscriptError::Sequence {
                index,
                expected: msg_type,
                sender,
            });
        }
        if msg_type.is_dh() {
            validate_element(&msg.payload, params)
                .map_err(|source| TranscriptError::Element { index, source })?;
        }
        if matches!(msg_type, MessageType::TagSetInitiator | MessageType::TagSetResponder) {
            let found = msg
                .tags()
                .map_err(|source| TranscriptError::Format { index, source })?
                .len();
            if found != m {
                return Err(TranscriptError::TagCount {
                    index,
                    expected: m,
                    found,
                });
            }
        }
    }
    Ok(())
}
