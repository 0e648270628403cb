//! Domain-separated hashes over SHA-256 and the HMAC tag functions.

use std::fmt;

use hmac::{Hmac, KeyInit, Mac};
use sha2::{Digest, Sha256};
use subtle::{Choice, ConstantTimeEq};

use crate::group::{GroupElement, GroupParams};
use crate::handshake::Role;

pub const DIGEST_LEN: usize = 32;

/// Roles a hashed group element can play. Each label is a distinct
/// function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HashLabel {
    /// Session key in the single-membership protocol.
    Key,
    /// Initiator's confirmation tag.
    ConfirmInitiator,
    /// Responder's confirmation tag.
    ConfirmResponder,
    /// Session key in the multi-membership protocol.
    MultiKey,
}

impl HashLabel {
    pub const ALL: [HashLabel; 4] = [
        HashLabel::Key,
        HashLabel::ConfirmInitiator,
        HashLabel::ConfirmResponder,
        HashLabel::MultiKey,
    ];

    pub fn as_bytes(self) -> &'static [u8] {
        match self {
            HashLabel::Key => b"ph-h3",
            HashLabel::ConfirmInitiator => b"ph-h4",
            HashLabel::ConfirmResponder => b"ph-h5",
            HashLabel::MultiKey => b"ph-h",
        }
    }
}

/// `SHA-256(label || encode(value))` with the fixed-width element encoding.
pub fn role_hash(label: HashLabel, value: &GroupElement, params: &GroupParams) -> [u8; DIGEST_LEN] {
    let mut h = Sha256::new();
    h.update(label.as_bytes());
    h.update(value.to_bytes(params));
    h.finalize().into()
}

#[derive(Clone, PartialEq, Eq)]
pub struct SessionKey([u8; DIGEST_LEN]);

impl SessionKey {
    pub fn from_bytes(bytes: [u8; DIGEST_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }
}

impl fmt::Debug for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SessionKey(..)")
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tag([u8; DIGEST_LEN]);

impl Tag {
    pub fn from_bytes(bytes: [u8; DIGEST_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn ct_eq(&self, other: &Tag) -> Choice {
        self.0.ct_eq(&other.0)
    }

    /// Constant-time membership test; scans all of `set`.
    pub fn ct_contained_in(&self, set: &[Tag]) -> Choice {
        set.iter().fold(Choice::from(0), |acc, t| acc | self.ct_eq(t))
    }
}

impl fmt::Debug for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tag({})", hex::encode(&self.0[..4]))
    }
}

fn direction_byte(direction: Role) -> u8 {
    match direction {
        Role::Initiator => b'I',
        Role::Responder => b'R',
    }
}

/// `HMAC-SHA256(k, direction || secret)` with direction byte `'I'` or `'R'`.
pub fn keyed_tag(k: &SessionKey, direction: Role, secret: &[u8]) -> Tag {
    let mut mac = <Hmac<Sha256> as KeyInit>::new_from_slice(k.as_bytes())
        .expect("HMAC accepts any key length");
    mac.update(&[direction_byte(direction)]);
    mac.update(secret);
    Tag(mac.finalize().into_bytes().into())
}

/// Plain HMAC-SHA256, exposed for known-answer tests.
pub fn hmac_sha256(key: &[u8], message: &[u8]) -> [u8; DIGEST_LEN] {
    let mut mac =
        <Hmac<Sha256> as KeyInit>::new_from_slice(key).expect("HMAC accepts any key length");
    mac.update(message);
    mac.finalize().into_bytes().into()
}
