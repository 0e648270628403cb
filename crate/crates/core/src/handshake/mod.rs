//! Sans-I/O state machines for both handshake protocols.
//!
//! A machine consumes [`WireMessage`]s and returns the messages to send; it
//! never touches a socket. One machine serves exactly one session.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rand::RngCore;
use thiserror::Error;

use crate::credentials::{build_padded_array, CredentialError, GroupSecret};
use crate::group::{Exponent, GroupError, GroupParams};
use crate::kdf::SessionKey;
use crate::wire::{FormatError, MessageType, WireMessage};

mod multi;
mod single;

pub use multi::{MultiHandshake, MultiPhase};
pub use single::{SingleHandshake, SinglePhase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Initiator,
    Responder,
}

impl Role {
    pub fn peer(self) -> Role {
        match self {
            Role::Initiator => Role::Responder,
            Role::Responder => Role::Initiator,
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Role::Initiator => "I",
            Role::Responder => "R",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    /// One group per node; the group secret is the DH generator.
    Single,
    /// Up to `m` groups per node; public generator plus keyed tag sets.
    Multi,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Single => "single",
            Protocol::Multi => "multi",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(Protocol::Single),
            "multi" => Ok(Protocol::Multi),
            other => Err(format!("unknown protocol {other:?}")),
        }
    }
}

/// How the two directions of the membership test are separated.
///
/// `Symmetric` uses the initiator's function in both directions, which lets
/// an eavesdropper spot shared membership by comparing the two directions.
/// It exists only so the distinguishing games can show they detect that
/// leak; never use it for real sessions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Separation {
    #[default]
    Directional,
    Symmetric,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum HandshakeError {
    #[error("{role:?} in phase {phase} cannot {action}")]
    State {
        role: Role,
        phase: &'static str,
        action: String,
    },
    #[error("peer sent {got} tags, expected {expected}")]
    Size { expected: usize, got: usize },
    #[error(transparent)]
    Format(#[from] FormatError),
}

impl HandshakeError {
    pub(crate) fn unexpected(role: Role, phase: &'static str, msg: MessageType) -> Self {
        Self::State {
            role,
            phase,
            action: format!("accept {msg}"),
        }
    }
}

/// Why a session ended without a trustworthy verdict.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AbortReason {
    /// The peer's group element failed validation. The machine still sent
    /// every message the protocol requires of it.
    Rejected(GroupError),
    /// The session was torn down by a protocol error.
    Protocol(HandshakeError),
    /// The session ended before reaching its final phase.
    Incomplete,
}

/// Result of one handshake: the matched groups by local id, and a session
/// key that is meaningful only if something matched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandshakeOutcome {
    pub matched: BTreeSet<String>,
    pub session_key: SessionKey,
    pub abort: Option<AbortReason>,
}

impl HandshakeOutcome {
    pub(crate) fn aborted(session_key: SessionKey, reason: AbortReason) -> Self {
        Self {
            matched: BTreeSet::new(),
            session_key,
            abort: Some(reason),
        }
    }
}

/// A node's standing configuration: its memberships, which of them to hide
/// this session, and the public membership cap `m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeConfig {
    pub memberships: Vec<GroupSecret>,
    pub hidden: BTreeSet<String>,
    pub max_memberships: usize,
}

impl NodeConfig {
    pub fn new(memberships: Vec<GroupSecret>, max_memberships: usize) -> Self {
        Self {
            memberships,
            hidden: BTreeSet::new(),
            max_memberships,
        }
    }

    /// The membership the single protocol uses: the first one not hidden.
    pub fn single_membership(&self) -> Option<&GroupSecret> {
        self.memberships
            .iter()
            .find(|s| !self.hidden.contains(s.id()))
    }

    /// Memberships this node will reveal in a session of `protocol`.
    pub fn visible(&self, protocol: Protocol) -> Vec<&GroupSecret> {
        match protocol {
            Protocol::Single => self.single_membership().into_iter().collect(),
            Protocol::Multi => self
                .memberships
                .iter()
                .filter(|s| !self.hidden.contains(s.id()))
                .collect(),
        }
    }

    /// Builds a fresh session, drawing all of its randomness from `rng`.
    pub fn session(
        &self,
        protocol: Protocol,
        role: Role,
        params: &Arc<GroupParams>,
        rng: &mut (impl RngCore + ?Sized),
    ) -> Result<Session, CredentialError> {
        Ok(match protocol {
            Protocol::Single => Session::Single(SingleHandshake::new(
                role,
                params.clone(),
                self.single_membership(),
                rng,
            )),
            Protocol::Multi => {
                let array =
                    build_padded_array(&self.memberships, &self.hidden, self.max_memberships, rng)?;
                Session::Multi(MultiHandshake::new(role, params.clone(), array, rng))
            }
        })
    }
}

/// Either protocol's machine behind one interface.
#[derive(Debug)]
pub enum Session {
    Single(SingleHandshake),
    Multi(MultiHandshake),
}

impl Session {
    pub fn protocol(&self) -> Protocol {
        match self {
            Session::Single(_) => Protocol::Single,
            Session::Multi(_) => Protocol::Multi,
        }
    }

    pub fn role(&self) -> Role {
        match self {
            Session::Single(s) => s.role(),
            Session::Multi(s) => s.role(),
        }
    }

    pub fn exponent(&self) -> &Exponent {
        match self {
            Session::Single(s) => s.exponent(),
            Session::Multi(s) => s.exponent(),
        }
    }

    pub fn with_separation(self, separation: Separation) -> Self {
        match self {
            Session::Single(s) => Session::Single(s.with_separation(separation)),
            Session::Multi(s) => Session::Multi(s.with_separation(separation)),
        }
    }

    pub fn start(&mut self) -> Result<WireMessage, HandshakeError> {
        match self {
            Session::Single(s) => s.start(),
            Session::Multi(s) => s.start(),
        }
    }

    pub fn on_message(&mut self, msg: &WireMessage) -> Result<Vec<WireMessage>, HandshakeError> {
        match self {
            Session::Single(s) => s.on_message(msg),
            Session::Multi(s) => s.on_message(msg),
        }
    }

    pub fn abort(&mut self, err: HandshakeError) -> HandshakeError {
        match self {
            Session::Single(s) => s.abort(err),
            Session::Multi(s) => s.abort(err),
        }
    }

    pub fn is_done(&self) -> bool {
        self.outcome().is_some()
    }

    pub fn outcome(&self) -> Option<&HandshakeOutcome> {
        match self {
            Session::Single(s) => s.outcome(),
            Session::Multi(s) => s.outcome(),
        }
    }

    /// The outcome, or an empty aborted outcome if the session never
    /// finished.
    pub fn finish(self) -> HandshakeOutcome {
        self.current_outcome()
    }

    pub fn current_outcome(&self) -> HandshakeOutcome {
        match self {
            Session::Single(s) => s.current_outcome(),
            Session::Multi(s) => s.current_outcome(),
        }
    }
}
