use std::collections::BTreeSet;
use std::sync::Arc;

use rand::RngCore;

use super::{AbortReason, HandshakeError, HandshakeOutcome, Role, Separation};
use crate::credentials::GroupSecret;
use crate::group::{
    derive_generator, mod_exp, random_exponent, validate_element, Exponent, GroupElement,
    GroupError, GroupParams,
};
use crate::kdf::{role_hash, HashLabel, SessionKey, Tag, DIGEST_LEN};
use crate::wire::{MessageType, WireMessage};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SinglePhase {
    Start,
    SentDh,
    SentConfirm,
    Done,
}

impl SinglePhase {
    fn name(self) -> &'static str {
        match self {
            SinglePhase::Start => "START",
            SinglePhase::SentDh => "SENT_DH",
            SinglePhase::SentConfirm => "SENT_CONFIRM",
            SinglePhase::Done => "DONE",
        }
    }
}

/// Single-membership handshake: DH over the secret generator, then key
/// confirmation doubling as the membership test.
///
/// ```text
/// I -> R  DH_SINGLE  s_i^x
/// R -> I  DH_SINGLE  s_r^y
/// I -> R  CONFIRM_I  h4(u^x)
/// R -> I  CONFIRM_R  h5(v^y)        (always sent)
/// ```
#[derive(Debug)]
pub struct SingleHandshake {
    role: Role,
    params: Arc<GroupParams>,
    group_id: Option<String>,
    generator: GroupElement,
    exponent: Exponent,
    own_element: GroupElement,
    decoy: [u8; DIGEST_LEN],
    separation: Separation,
    phase: SinglePhase,
    peer_element: Option<GroupElement>,
    shared: Option<GroupElement>,
    rejected: Option<GroupError>,
    sent_tag: Option<[u8; DIGEST_LEN]>,
    outcome: Option<HandshakeOutcome>,
}

impl SingleHandshake {
    /// Members derive their generator from the group secret; nodes without
    /// a membership use a fresh random subgroup element.
    pub fn new(
        role: Role,
        params: Arc<GroupParams>,
        membership: Option<&GroupSecret>,
        rng: &mut (impl RngCore + ?Sized),
    ) -> Self {
        let Some(secret) = membership else {
            // g^r raised to x is g^(rx), which the fixed-base table computes.
            let r = random_exponent(rng, &params);
            let exponent = random_exponent(rng, &params);
            let mut decoy = [0u8; DIGEST_LEN];
            rng.fill_bytes(&mut decoy);
            let generator = params.generator_pow(&r);
            let own_element = params.generator_pow(&r.mul(&exponent, &params));
            return Self::assemble(role, params, None, generator, exponent, own_element, decoy);
        };
        let generator = derive_generator(secret, &params).expect("hash-to-group failed");
        let exponent = random_exponent(rng, &params);
        let mut decoy = [0u8; DIGEST_LEN];
        rng.fill_bytes(&mut decoy);
        Self::from_parts(role, params, Some(secret.id().to_string()), generator, exponent, decoy)
    }

    /// Assembles a machine from explicit values, for replaying recorded
    /// sessions.
    pub fn from_parts(
        role: Role,
        params: Arc<GroupParams>,
        group_id: Option<String>,
        generator: GroupElement,
        exponent: Exponent,
        decoy: [u8; DIGEST_LEN],
    ) -> Self {
        let own_element = params.fixed_base_pow(&generator, &exponent);
        Self::assemble(role, params, group_id, generator, exponent, own_element, decoy)
    }

    fn assemble(
        role: Role,
        params: Arc<GroupParams>,
        group_id: Option<String>,
        generator: GroupElement,
        exponent: Exponent,
        own_element: GroupElement,
        decoy: [u8; DIGEST_LEN],
    ) -> Self {
        Self {
            role,
            params,
            group_id,
            generator,
            exponent,
            own_element,
            decoy,
            separation: Separation::Directional,
            phase: SinglePhase::Start,
            peer_element: None,
            shared: None,
            rejected: None,
            sent_tag: None,
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

    pub fn phase(&self) -> SinglePhase {
        self.phase
    }

    pub fn group_id(&self) -> Option<&str> {
        self.group_id.as_deref()
    }

    /// Stand-in tag and key used when there is no valid shared value.
    pub fn decoy(&self) -> &[u8; DIGEST_LEN] {
        &self.decoy
    }

    pub fn generator(&self) -> &GroupElement {
        &self.generator
    }

    pub fn exponent(&self) -> &Exponent {
        &self.exponent
    }

    pub fn own_element(&self) -> GroupElement {
        self.own_element
    }

    pub fn peer_element(&self) -> Option<&GroupElement> {
        self.peer_element.as_ref()
    }

    pub fn shared(&self) -> Option<&GroupElement> {
        self.shared.as_ref()
    }

    pub fn sent_tag(&self) -> Option<&[u8; DIGEST_LEN]> {
        self.sent_tag.as_ref()
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
            None => HandshakeOutcome::aborted(SessionKey::from_bytes(self.decoy), AbortReason::Incomplete),
        }
    }

    pub fn start(&mut self) -> Result<WireMessage, HandshakeError> {
        if self.role != Role::Initiator || self.phase != SinglePhase::Start {
            return Err(self.abort(HandshakeError::State {
                role: self.role,
                phase: self.phase.name(),
                action: "start".into(),
            }));
        }
        self.phase = SinglePhase::SentDh;
        Ok(self.dh_message())
    }

    pub fn on_message(&mut self, msg: &WireMessage) -> Result<Vec<WireMessage>, HandshakeError> {
        match (self.role, self.phase, msg.msg_type) {
            (Role::Responder, SinglePhase::Start, MessageType::DhSingle) => {
                self.accept_peer_element(&msg.payload);
                self.phase = SinglePhase::SentDh;
                Ok(vec![self.dh_message()])
            }
            (Role::Initiator, SinglePhase::SentDh, MessageType::DhSingle) => {
                self.accept_peer_element(&msg.payload);
                let tag = self.confirmation(Role::Initiator);
                self.sent_tag = Some(tag);
                self.phase = SinglePhase::SentConfirm;
                Ok(vec![WireMessage::confirm(Role::Initiator, &tag)])
            }
            (Role::Responder, SinglePhase::SentDh, MessageType::ConfirmInitiator) => {
                let received = msg.confirm_tag().map_err(|e| self.abort(e.into()))?;
                self.conclude(&received, Role::Initiator);
                // Sent whatever the verdict, so behaviour does not reveal it.
                let tag = self.confirmation(Role::Responder);
                self.sent_tag = Some(tag);
                Ok(vec![WireMessage::confirm(Role::Responder, &tag)])
            }
            (Role::Initiator, SinglePhase::SentConfirm, MessageType::ConfirmResponder) => {
                let received = msg.confirm_tag().map_err(|e| self.abort(e.into()))?;
                self.conclude(&received, Role::Responder);
                Ok(Vec::new())
            }
            (role, phase, msg_type) => Err(self.abort(HandshakeError::unexpected(role, phase.name(), msg_type))),
        }
    }

    fn dh_message(&self) -> WireMessage {
        WireMessage::new(
            MessageType::DhSingle,
            self.own_element().to_bytes(&self.params),
        )
    }

    fn accept_peer_element(&mut self, raw: &[u8]) {
        match validate_element(raw, &self.params) {
            Ok(peer) => {
                self.peer_element = Some(peer);
                self.shared = Some(mod_exp(&peer, &self.exponent, &self.params));
            }
            Err(e) => self.rejected = Some(e),
        }
    }

    fn label_for(&self, sender: Role) -> HashLabel {
        match (self.separation, sender) {
            (Separation::Symmetric, _) | (Separation::Directional, Role::Initiator) => {
                HashLabel::ConfirmInitiator
            }
            (Separation::Directional, Role::Responder) => HashLabel::ConfirmResponder,
        }
    }

    /// Tag `sender` is expected to produce over the shared value. Without a
    /// shared value the decoy stands in, so the message is still sent.
    fn confirmation(&self, sender: Role) -> [u8; DIGEST_LEN] {
        match &self.shared {
            Some(shared) => role_hash(self.label_for(sender), shared, &self.params),
            None => self.decoy,
        }
    }

    fn conclude(&mut self, received: &Tag, sender: Role) {
        let verified = match &self.shared {
            Some(_) => bool::from(Tag::from_bytes(self.confirmation(sender)).ct_eq(received)),
            None => false,
        };
        let matched: BTreeSet<String> = match (&self.group_id, verified) {
            (Some(id), true) => [id.clone()].into(),
            _ => BTreeSet::new(),
        };
        let session_key = match &self.shared {
            Some(shared) => SessionKey::from_bytes(role_hash(HashLabel::Key, shared, &self.params)),
            None => SessionKey::from_bytes(self.decoy),
        };
        self.phase = SinglePhase::Done;
        self.outcome = Some(HandshakeOutcome {
            matched,
            session_key,
            abort: self.rejected.clone().map(AbortReason::Rejected),
        });
    }

    /// Ends the session with an empty outcome unless it already finished.
    pub fn abort(&mut self, err: HandshakeError) -> HandshakeError {
        if self.outcome.is_none() {
            self.outcome = Some(HandshakeOutcome::aborted(
                SessionKey::from_bytes(self.decoy),
                AbortReason::Protocol(err.clone()),
            ));
        }
        self.phase = SinglePhase::Done;
        err
    }
}
