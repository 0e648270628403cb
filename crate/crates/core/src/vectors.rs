//! Deterministic test vectors: a full session with every intermediate value,
//! in a line-oriented text format, and a replayer that checks one.
//!
//! Format: `#` starts a comment line; every other line is `key = value`.
//! Hex is lowercase, big-endian, fixed width for group elements. Keys, in
//! the order written:
//!
//! ```text
//! protocol = single | multi
//! seed = <hex>            (empty if not seeded)
//! p, q, g = <hex>
//! m = <decimal>           (1 for the single protocol)
//! then for side X in I, R:
//!   X.group = <id>        (single; empty for a node without membership)
//!   X.generator = <hex>   (single)
//!   X.slot = <id>:<hex> or <hex>  (multi, one per array entry in order;
//!                                  bare hex is padding)
//!   X.exponent, X.decoy, X.element = <hex>
//!   X.shared = <hex>      (empty if the peer element was rejected)
//!   X.tag = <hex>         (one per tag sent, in order)
//!   X.key = <hex>
//!   X.matched = <id> <id> ...
//! msg = I>R <hex frame> | R>I <hex frame>   (in send order)
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

use crate::credentials::{PaddedArray, Slot, SECRET_LEN};
use crate::group::{validate_element, Exponent, GroupElement, GroupParams};
use crate::handshake::{
    HandshakeOutcome, MultiHandshake, NodeConfig, Protocol, Role, Session, SingleHandshake,
};
use crate::kdf::DIGEST_LEN;
use crate::sim::network::{seeded_rng, Script, SimNetwork};
use crate::wire::{decode, encode};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Credential {
    Single {
        group: Option<String>,
        generator: Vec<u8>,
    },
    Multi {
        slots: Vec<Slot>,
    },
}

/// Everything one side used and produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SideRecord {
    pub credential: Credential,
    pub exponent: Vec<u8>,
    pub decoy: [u8; DIGEST_LEN],
    pub element: Vec<u8>,
    pub shared: Option<Vec<u8>>,
    pub tags: Vec<[u8; DIGEST_LEN]>,
    pub key: [u8; DIGEST_LEN],
    pub matched: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VectorFile {
    pub protocol: Protocol,
    pub seed: Vec<u8>,
    pub params: Arc<GroupParams>,
    pub m: usize,
    pub initiator: SideRecord,
    pub responder: SideRecord,
    pub messages: Vec<(Role, Vec<u8>)>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VectorError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("missing key {0}")]
    Missing(String),
    #[error("replay diverged: {0}")]
    Mismatch(String),
}

fn side_record(session: &Session, outcome: &HandshakeOutcome, params: &GroupParams) -> SideRecord {
    let (credential, decoy, element, shared, tags) = match session {
        Session::Single(s) => (
            Credential::Single {
                group: s.group_id().map(str::to_string),
                generator: s.generator().to_bytes(params),
            },
            *s.decoy(),
            s.own_element().to_bytes(params),
            s.shared().map(|v| v.to_bytes(params)),
            s.sent_tag().into_iter().copied().collect(),
        ),
        Session::Multi(s) => (
            Credential::Multi {
                slots: s.array().slots().to_vec(),
            },
            *s.decoy(),
            s.own_element().to_bytes(params),
            s.shared().map(|v| v.to_bytes(params)),
            s.sent_tags().iter().map(|t| *t.as_bytes()).collect(),
        ),
    };
    SideRecord {
        credential,
        exponent: session.exponent().to_bytes(params),
        decoy,
        element,
        shared,
        tags,
        key: *outcome.session_key.as_bytes(),
        matched: outcome.matched.clone(),
    }
}

/// Runs one honest session from prepared machines and records it.
pub fn record_session(initiator: Session, responder: Session, params: &Arc<GroupParams>, seed: &[u8]) -> VectorFile {
    let protocol = initiator.protocol();
    let m = match &initiator {
        Session::Single(_) => 1,
        Session::Multi(s) => s.capacity(),
    };
    let run = SimNetwork::new(params.clone())
        .corrupt(Role::Initiator)
        .corrupt(Role::Responder)
        .drive(initiator, responder, &Script::passive());
    let side = |role: Role| {
        side_record(
            run.corrupted_state(role).expect("both sides kept"),
            run.outcome(role),
            params,
        )
    };
    VectorFile {
        protocol,
        seed: seed.to_vec(),
        params: params.clone(),
        m,
        initiator: side(Role::Initiator),
        responder: side(Role::Responder),
        messages: run
            .transcript
            .entries
            .iter()
            .map(|e| (e.sender, e.frame.clone()))
            .collect(),
    }
}

/// The session two seeded peers with these configurations would run.
pub fn emit_vectors(
    seed: &[u8],
    protocol: Protocol,
    params: &Arc<GroupParams>,
    initiator: &NodeConfig,
    responder: &NodeConfig,
) -> Result<VectorFile, crate::credentials::CredentialError> {
    let a = initiator.session(protocol, Role::Initiator, params, &mut seeded_rng(seed, Role::Initiator))?;
    let b = responder.session(protocol, Role::Responder, params, &mut seeded_rng(seed, Role::Responder))?;
    Ok(record_session(a, b, params, seed))
}

fn side_prefix(role: Role) -> &'static str {
    role.short()
}

impl VectorFile {
    pub fn side(&self, role: Role) -> &SideRecord {
        match role {
            Role::Initiator => &self.initiator,
            Role::Responder => &self.responder,
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let params = &self.params;
        out.push_str("# private handshake test vector\n");
        let _ = writeln!(out, "protocol = {}", self.protocol);
        let _ = writeln!(out, "seed = {}", hex::encode(&self.seed));
        let _ = writeln!(out, "p = {}", hex::encode(params.encode(params.modulus())));
        let _ = writeln!(out, "q = {}", hex::encode(params.encode(params.order())));
        let _ = writeln!(out, "g = {}", hex::encode(params.generator().to_bytes(params)));
        let _ = writeln!(out, "m = {}", self.m);
        for role in [Role::Initiator, Role::Responder] {
            let x = side_prefix(role);
            let s = self.side(role);
            match &s.credential {
                Credential::Single { group, generator } => {
                    let _ = writeln!(out, "{x}.group = {}", group.as_deref().unwrap_or(""));
                    let _ = writeln!(out, "{x}.generator = {}", hex::encode(generator));
                }
                Credential::Multi { slots } => {
                    for slot in slots {
                        match &slot.id {
                            Some(id) => {
                                let _ = writeln!(out, "{x}.slot = {id}:{}", hex::encode(slot.secret));
                            }
                            None => {
                                let _ = writeln!(out, "{x}.slot = {}", hex::encode(slot.secret));
                            }
                        }
                    }
                }
            }
            let _ = writeln!(out, "{x}.exponent = {}", hex::encode(&s.exponent));
            let _ = writeln!(out, "{x}.decoy = {}", hex::encode(s.decoy));
            let _ = writeln!(out, "{x}.element = {}", hex::encode(&s.element));
            let _ = writeln!(out, "{x}.shared = {}", s.shared.as_ref().map(hex::encode).unwrap_or_default());
            for tag in &s.tags {
                let _ = writeln!(out, "{x}.tag = {}", hex::encode(tag));
            }
            let _ = writeln!(out, "{x}.key = {}", hex::encode(s.key));
            let matched: Vec<&str> = s.matched.iter().map(String::as_str).collect();
            let _ = writeln!(out, "{x}.matched = {}", matched.join(" "));
        }
        for (sender, frame) in &self.messages {
            let dir = match sender {
                Role::Initiator => "I>R",
                Role::Responder => "R>I",
            };
            let _ = writeln!(out, "msg = {dir} {}", hex::encode(frame));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, VectorError> {
        let mut entries: Vec<(usize, &str, &str)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| VectorError::Parse {
                line: i + 1,
                reason: "expected key = value".into(),
            })?;
            entries.push((i + 1, k.trim(), v.trim()));
        }
        let find = |key: &str| -> Result<(usize, &str), VectorError> {
            entries
                .iter()
                .find(|(_, k, _)| *k == key)
                .map(|(l, _, v)| (*l, *v))
                .ok_or_else(|| VectorError::Missing(key.to_string()))
        };
        let all = |key: &str| -> Vec<(usize, &str)> {
            entries
                .iter()
                .filter(|(_, k, _)| *k == key)
                .map(|(l, _, v)| (*l, *v))
                .collect()
        };
        let bytes = |(line, v): (usize, &str)| -> Result<Vec<u8>, VectorError> {
            hex::decode(v).map_err(|e| VectorError::Parse {
                line,
                reason: e.to_string(),
            })
        };
        let digest = |(line, v): (usize, &str)| -> Result<[u8; DIGEST_LEN], VectorError> {
            bytes((line, v))?.try_into().map_err(|_| VectorError::Parse {
                line,
                reason: "expected 32 bytes".into(),
            })
        };

        let (line, proto) = find("protocol")?;
        let protocol: Protocol = proto.parse().map_err(|reason| VectorError::Parse { line, reason })?;
        let seed = bytes(find("seed")?)?;
        let (pl, p) = find("p")?;
        let params = GroupParams::from_hex(p, find("q")?.1, find("g")?.1).map_err(|e| VectorError::Parse {
            line: pl,
            reason: e.to_string(),
        })?;
        let (ml, m) = find("m")?;
        let m: usize = m.parse().map_err(|_| VectorError::Parse {
            line: ml,
            reason: "m must be a number".into(),
        })?;

        let mut sides = Vec::with_capacity(2);
        for role in [Role::Initiator, Role::Responder] {
            let x = side_prefix(role);
            let key = |k: &str| format!("{x}.{k}");
            let credential = match protocol {
                Protocol::Single => {
                    let group = find(&key("group"))?.1;
                    Credential::Single {
                        group: (!group.is_empty()).then(|| group.to_string()),
                        generator: bytes(find(&key("generator"))?)?,
                    }
                }
                Protocol::Multi => {
                    let mut slots = Vec::new();
                    for (line, v) in all(&key("slot")) {
                        let (id, hex_part) = match v.split_once(':') {
                            Some((id, h)) => (Some(id.to_string()), h),
                            None => (None, v),
                        };
                        let secret: [u8; SECRET_LEN] =
                            bytes((line, hex_part))?.try_into().map_err(|_| VectorError::Parse {
                                line,
                                reason: "slot secret must be 32 bytes".into(),
                            })?;
                        slots.push(Slot { secret, id });
                    }
                    Credential::Multi { slots }
                }
            };
            let shared = find(&key("shared"))?;
            sides.push(SideRecord {
                credential,
                exponent: bytes(find(&key("exponent"))?)?,
                decoy: digest(find(&key("decoy"))?)?,
                element: bytes(find(&key("element"))?)?,
                shared: if shared.1.is_empty() { None } else { Some(bytes(shared)?) },
                tags: all(&key("tag")).into_iter().map(digest).collect::<Result<_, _>>()?,
                key: digest(find(&key("key"))?)?,
                matched: find(&key("matched"))?
                    .1
                    .split_whitespace()
                    .map(str::to_string)
                    .collect(),
            });
        }
        let mut messages = Vec::new();
        for (line, v) in all("msg") {
            let (dir, frame) = v.split_once(' ').ok_or_else(|| VectorError::Parse {
                line,
                reason: "expected direction and frame".into(),
            })?;
            let sender = match dir {
                "I>R" => Role::Initiator,
                "R>I" => Role::Responder,
                _ => {
                    return Err(VectorError::Parse {
                        line,
                        reason: format!("bad direction {dir:?}"),
                    })
                }
            };
            messages.push((sender, bytes((line, frame.trim()))?));
        }
        let responder = sides.pop().expect("two sides");
        let initiator = sides.pop().expect("two sides");
        Ok(VectorFile {
            protocol,
            seed,
            params: Arc::new(params),
            m,
            initiator,
            responder,
            messages,
        })
    }

    /// Rebuilds both machines from the recorded values, feeds them the
    /// recorded frames through the decoder, and checks that every frame
    /// they emit and every recorded result is reproduced.
    pub fn replay(&self) -> Result<(), VectorError> {
        let mismatch = |what: String| Err(VectorError::Mismatch(what));
        let params = &self.params;
        let mut machines = Vec::with_capacity(2);
        for role in [Role::Initiator, Role::Responder] {
            let s = self.side(role);
            let exponent = Exponent::from_bytes(&s.exponent, params)
                .map_err(|e| VectorError::Mismatch(format!("{} exponent: {e}", role.short())))?;
            let session = match &s.credential {
                Credential::Single { group, generator } => {
                    let g = validate_element(generator, params)
                        .map_err(|e| VectorError::Mismatch(format!("{} generator: {e}", role.short())))?;
                    Session::Single(SingleHandshake::from_parts(
                        role,
                        params.clone(),
                        group.clone(),
                        g,
                        exponent,
                        s.decoy,
                    ))
                }
                Credential::Multi { slots } => Session::Multi(MultiHandshake::from_parts(
                    role,
                    params.clone(),
                    PaddedArray::from_slots(slots.clone()),
                    exponent,
                    s.decoy,
                )),
            };
            machines.push(session);
        }

        let width = params.element_width();
        let Some((first_sender, first)) = self.messages.first() else {
            return mismatch("no messages".into());
        };
        let produced = encode(&machines[0].start().map_err(|e| VectorError::Mismatch(e.to_string()))?);
        if *first_sender != Role::Initiator || produced != *first {
            return mismatch("message 0".into());
        }
        let mut expected = self.messages.iter().enumerate().skip(1);
        for (i, (sender, frame)) in self.messages.iter().enumerate() {
            let msg = decode(frame, width).map_err(|e| VectorError::Mismatch(format!("message {i}: {e}")))?;
            let receiver = &mut machines[usize::from(*sender == Role::Initiator)];
            let replies = receiver
                .on_message(&msg)
                .map_err(|e| VectorError::Mismatch(format!("message {i}: {e}")))?;
            for reply in replies {
                let Some((j, (want_sender, want))) = expected.next() else {
                    return mismatch(format!("extra reply after message {i}"));
                };
                if *want_sender != sender.peer() || encode(&reply) != *want {
                    return mismatch(format!("message {j}"));
                }
            }
        }
        if let Some((j, _)) = expected.next() {
            return mismatch(format!("message {j} never produced"));
        }

        let [a, b]: [Session; 2] = machines.try_into().expect("two machines");
        for (role, session) in [(Role::Initiator, a), (Role::Responder, b)] {
            let record = self.side(role);
            let shared = match &session {
                Session::Single(s) => s.shared().map(|v| v.to_bytes(params)),
                Session::Multi(s) => s.shared().map(|v| v.to_bytes(params)),
            };
            let element: GroupElement = match &session {
                Session::Single(s) => s.own_element(),
                Session::Multi(s) => s.own_element(),
            };
            let outcome = session.finish();
            if element.to_bytes(params) != record.element {
                return mismatch(format!("{} element", role.short()));
            }
            if shared != record.shared {
                return mismatch(format!("{} shared", role.short()));
            }
            if outcome.matched != record.matched {
                return mismatch(format!("{} matched", role.short()));
            }
            if *outcome.session_key.as_bytes() != record.key {
                return mismatch(format!("{} key", role.short()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::credentials::new_group_secret;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn configs(rng: &mut ChaCha20Rng) -> (NodeConfig, NodeConfig) {
        let red = new_group_secret(rng, "red");
        let blue = new_group_secret(rng, "blue");
        let a = NodeConfig::new(vec![red.clone(), blue], 3);
        let b = NodeConfig::new(vec![red.aliased("rouge")], 3);
        (a, b)
    }

    #[test]
    fn same_seed_same_file() {
        let params = GroupParams::test_group();
        let (a, b) = configs(&mut ChaCha20Rng::seed_from_u64(40));
        for protocol in [Protocol::Single, Protocol::Multi] {
            let x = emit_vectors(b"\x01\x02", protocol, &params, &a, &b).unwrap().render();
            let y = emit_vectors(b"\x01\x02", protocol, &params, &a, &b).unwrap().render();
            assert_eq!(x, y);
            let z = emit_vectors(b"\x01\x03", protocol, &params, &a, &b).unwrap().render();
            assert_ne!(x, z);
        }
    }

    #[test]
    fn render_parse_replay() {
        let params = GroupParams::test_group();
        let (a, b) = configs(&mut ChaCha20Rng::seed_from_u64(41));
        for protocol in [Protocol::Single, Protocol::Multi] {
            let v = emit_vectors(b"seed", protocol, &params, &a, &b).unwrap();
            let parsed = VectorFile::parse(&v.render()).unwrap();
            assert_eq!(parsed, v);
            parsed.replay().unwrap();
            assert_eq!(v.initiator.matched, BTreeSet::from(["red".to_string()]));
            assert_eq!(v.responder.matched, BTreeSet::from(["rouge".to_string()]));
        }
    }

    #[test]
    fn tampered_vector_fails_replay() {
        let params = GroupParams::test_group();
        let (a, b) = configs(&mut ChaCha20Rng::seed_from_u64(42));
        let mut v = emit_vectors(b"seed", Protocol::Multi, &params, &a, &b).unwrap();
        v.responder.key[0] ^= 1;
        assert!(matches!(v.replay(), Err(VectorError::Mismatch(_))));
        let mut v = emit_vectors(b"seed", Protocol::Single, &params, &a, &b).unwrap();
        let last = v.messages[3].1.len() - 1;
        v.messages[3].1[last] ^= 1;
        assert!(v.replay().is_err());
    }

    #[test]
    fn missing_key_is_reported() {
        let params = GroupParams::test_group();
        let (a, b) = configs(&mut ChaCha20Rng::seed_from_u64(43));
        let text = emit_vectors(b"", Protocol::Single, &params, &a, &b).unwrap().render();
        let cut: String = text.lines().filter(|l| !l.starts_with("R.key")).map(|l| format!("{l}\n")).collect();
        assert_eq!(VectorFile::parse(&cut), Err(VectorError::Missing("R.key".into())));
    }
}
