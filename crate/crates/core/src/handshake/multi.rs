use std::collections::BTreeSet;
use std::sync::Arc;

use rand::RngCore;

use super::{AbortReason, HandshakeError, HandshakeOutcome, Role, Separation};
use crate::credentials::PaddedArray;
use crate::group::{mod_exp, random_exponent, validate_element, Exponent, GroupElement, GroupError, GroupParams};
use crate::kdf::{keyed_tag, role_hash, HashLabel, SessionKey, Tag, DIGEST_LEN};
use crate::wire::{MessageType, WireMessage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultiPhase {
    Start,
    SentDh,
    SentTags,
    Done,
}

impl MultiPhase {
    fn name(self) -> &'static str {
        match self {
            MultiPhase::Start => "START",
            MultiPhase::SentDh => "SENT_DH",
            MultiPhase::SentTags => "SENT_TAGS",
            MultiPhase::Done => "DONE",
        }
    }
}

/// Multi-membership handshake: DH over the public generator, then each side
/// sends `m` keyed tags of its padded array.
///
/// ```text
/// I -> R  DH_MULTI  g^x
/// R -> I  DH_MULTI  g^y
/// I -> R  TAGSET_I  HMAC(k, 'I' || a[i])  for i in 1..=m
/// R -> I  TAGSET_R  HMAC(k, 'R' || b[i])  for i in 1..=m
/// ```
///
/// A side's own slot matches when the peer-direction tag of that slot is in
/// the received set.
#[derive(Debug)]
pub struct MultiHandshake {
    role: Role,
    params: Arc<GroupParams>,
    array: PaddedArray,
    exponent: Exponent,
    decoy: [u8; DIGEST_LEN],
    separation: Separation,
    phase: MultiPhase,
    peer_element: Option<GroupElement>,
    shared: Option<GroupElement>,
    key: Option<SessionKey>,
    rejected: Option<GroupError>,
    sent_tags: Vec<Tag>,
    received_tags: Vec<Tag>,
    outcome: Option<HandshakeOutcome>,
}

impl MultiHandshake {
    pub fn new(
        role: Role,
        params: Arc<GroupParams>,
        array: PaddedArray,
        rng: &mut (impl RngCore + ?Sized),
    ) -> Self {
        let exponent = random_exponent(rng, &params);
        let mut decoy = [0u8; DIGEST_LEN];
        rng.fill_bytes(&mut decoy);
        Self::from_parts(role, params, array, exponent, decoy)
    }

    pub fn from_parts(
        role: Role,
        params: Arc<GroupParams>,
        array: PaddedArray,
        exponent: Exponent,
        decoy: [u8; DIGEST_LEN],
    ) -> Self {
        Self {
            role,
            params,
            array,
            exponent,
            decoy,
            separation: Separation::Directional,
            phase: MultiPhase::Start,
            peer_element: None,
            shared: None,
            key: None,
            rejected: None,
            sent_tags: Vec::new(),
            received_tags: Vec::new(),
            outcome: None,
        }
    }

    pub fn with_separation(mut self, separation: Separation) -> Self {
        self.separation = separation;
        self
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn phase(&self) -> MultiPhase {
        self.phase
    }

    /// The membership cap `m`; every tag set has exactly this many entries.
    pub fn capacity(&self) -> usize {
        self.array.len()
    }

    pub fn array(&self) -> &PaddedArray {
        &self.array
    }

    /// Stand-in key used when there is no valid shared value.
    pub fn decoy(&self) -> &[u8; DIGEST_LEN] {
        &self.decoy
    }

    pub fn exponent(&self) -> &Exponent {
        &self.exponent
    }

    pub fn own_element(&self) -> GroupElement {
        self.params.generator_pow(&self.exponent)
    }

    pub fn peer_element(&self) -> Option<&GroupElement> {
        self.peer_element.as_ref()
    }

    pub fn shared(&self) -> Option<&GroupElement> {
        self.shared.as_ref()
    }

    pub fn key(&self) -> Option<&SessionKey> {
        self.key.as_ref()
    }

    pub fn sent_tags(&self) -> &[Tag] {
        &self.sent_tags
    }

    pub fn outcome(&self) -> Option<&HandshakeOutcome> {
        self.outcome.as_ref()
    }

    pub fn finish(self) -> HandshakeOutcome {
        self.current_outcome()
    }

    /// The outcome so far, without consuming the machine.
    pub fn current_outcome(&self) -> HandshakeOutcome {
        match &self.outcome {
            Some(o) => o.clone(),
            None => HandshakeOutcome::aborted(
                self.key.clone().unwrap_or(SessionKey::from_bytes(self.decoy)),
                AbortReason::Incomplete,
            ),
        }
    }

    pub fn start(&mut self) -> Result<WireMessage, HandshakeError> {
        if self.role != Role::Initiator || self.phase != MultiPhase::Start {
            return Err(self.abort(HandshakeError::State {
                role: self.role,
                phase: self.phase.name(),
                action: "start".into(),
            }));
        }
        self.phase = MultiPhase::SentDh;
        Ok(self.dh_message())
    }

    pub fn on_message(&mut self, msg: &WireMessage) -> Result<Vec<WireMessage>, HandshakeError> {
        match (self.role, self.phase, msg.msg_type) {
            (Role::Responder, MultiPhase::Start, MessageType::DhMulti) => {
                self.accept_peer_element(&msg.payload);
                self.phase = MultiPhase::SentDh;
                Ok(vec![self.dh_message()])
            }
            (Role::Initiator, MultiPhase::SentDh, MessageType::DhMulti) => {
                self.accept_peer_element(&msg.payload);
                self.phase = MultiPhase::SentTags;
                Ok(vec![self.tag_message()])
            }
            (Role::Responder, MultiPhase::SentDh, MessageType::TagSetInitiator) => {
                self.receive_tags(msg)?;
                let reply = self.tag_message();
                self.conclude();
                Ok(vec![reply])
            }
            (Role::Initiator, MultiPhase::SentTags, MessageType::TagSetResponder) => {
                self.receive_tags(msg)?;
                self.conclude();
                Ok(Vec::new())
            }
            (role, phase, msg_type) => Err(self.abort(HandshakeError::unexpected(role, phase.name(), msg_type))),
        }
    }

    fn dh_message(&self) -> WireMessage {
        WireMessage::new(MessageType::DhMulti, self.own_element().to_bytes(&self.params))
    }

    fn accept_peer_element(&mut self, raw: &[u8]) {
        match validate_element(raw, &self.params) {
            Ok(peer) => {
                let shared = mod_exp(&peer, &self.exponent, &self.params);
                self.key = Some(SessionKey::from_bytes(role_hash(
                    HashLabel::MultiKey,
                    &shared,
                    &self.params,
                )));
                self.peer_element = Some(peer);
                self.shared = Some(shared);
            }
            Err(e) => {
                self.rejected = Some(e);
                self.key = Some(SessionKey::from_bytes(self.decoy));
            }
        }
    }

    fn direction_of(&self, sender: Role) -> Role {
        match self.separation {
            Separation::Directional => sender,
            Separation::Symmetric => Role::Initiator,
        }
    }

    fn key_or_decoy(&self) -> SessionKey {
        self.key.clone().unwrap_or(SessionKey::from_bytes(self.decoy))
    }

    fn tag_message(&mut self) -> WireMessage {
        let key = self.key_or_decoy();
        let direction = self.direction_of(self.role);
        self.sent_tags = self
            .array
            .slots()
            .iter()
            .map(|slot| keyed_tag(&key, direction, &slot.secret))
            .collect();
        WireMessage::tag_set(self.role, &self.sent_tags)
    }

    fn receive_tags(&mut self, msg: &WireMessage) -> Result<(), HandshakeError> {
        let tags = msg.tags().map_err(|e| self.abort(e.into()))?;
        if tags.len() != self.capacity() {
            return Err(self.abort(HandshakeError::Size {
                expected: self.capacity(),
                got: tags.len(),
            }));
        }
        self.received_tags = tags;
        Ok(())
    }

    fn conclude(&mut self) {
        let key = self.key_or_decoy();
        let direction = self.direction_of(self.role.peer());
        let mut matched = BTreeSet::new();
        // Every slot is tested, padding included, so timing is independent
        // of how many slots are real.
        for slot in self.array.slots() {
            let expected = keyed_tag(&key, direction, &slot.secret);
            let hit = bool::from(expected.ct_contained_in(&self.received_tags));
            if let (true, Some(id), None) = (hit, &slot.id, &self.rejected) {
                matched.insert(id.clone());
            }
        }
        self.phase = MultiPhase::Done;
        self.outcome = Some(HandshakeOutcome {
            matched,
            session_key: key,
            abort: self.rejected.clone().map(AbortReason::Rejected),
        });
    }

    /// Ends the session with an empty outcome unless it already finished.
    pub fn abort(&mut self, err: HandshakeError) -> HandshakeError {
        if self.outcome.is_none() {
            self.outcome = Some(HandshakeOutcome::aborted(
                self.key_or_decoy(),
                AbortReason::Protocol(err.clone()),
            ));
        }
        self.phase = MultiPhase::Done;
        err
    }
}
