use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use rand::RngCore;
use rand_chacha::ChaCha20Rng;

use crate::group::GroupParams;
use crate::handshake::{HandshakeError, HandshakeOutcome, NodeConfig, Protocol, Role, Separation, Session};
use crate::transcript::Transcript;
use crate::wire::{decode, encode};

/// A deterministic edit applied to a frame in flight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tamper {
    /// Flips bit `n mod (8 * len)`, counting from the first byte's MSB.
    FlipBit(usize),
    /// Keeps at most this many bytes.
    Truncate(usize),
    Append(Vec<u8>),
    /// Overwrites byte `offset mod len`.
    SetByte { offset: usize, value: u8 },
}

impl Tamper {
    pub fn apply(&self, frame: &[u8]) -> Vec<u8> {
        let mut out = frame.to_vec();
        match self {
            Tamper::FlipBit(n) if !out.is_empty() => {
                let bit = n % (out.len() * 8);
                out[bit / 8] ^= 0x80 >> (bit % 8);
            }
            Tamper::Truncate(n) => out.truncate(*n),
            Tamper::Append(extra) => out.extend_from_slice(extra),
            Tamper::SetByte { offset, value } if !out.is_empty() => {
                let len = out.len();
                out[offset % len] = *value;
            }
            _ => {}
        }
        out
    }
}

/// One adversary action. Rules that act on "the next message" take the
/// oldest frame in flight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rule {
    Deliver,
    Drop,
    Modify(Tamper),
    Inject { to: Role, frame: Vec<u8> },
    /// Re-sends the `index`-th honest frame of this session to `to`.
    Replay { index: usize, to: Role },
    /// Hands the next frame back to its sender.
    Reflect,
    /// Swaps the two oldest frames in flight.
    Reorder,
}

/// Rules applied in order, then `fallback` repeatedly until nothing is in
/// flight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Script {
    pub rules: Vec<Rule>,
    pub fallback: Rule,
}

impl Script {
    pub fn new(rules: Vec<Rule>) -> Self {
        Self {
            rules,
            fallback: Rule::Deliver,
        }
    }

    /// Honest delivery.
    pub fn passive() -> Self {
        Self::new(Vec::new())
    }

    pub fn drop_all() -> Self {
        Self {
            rules: Vec::new(),
            fallback: Rule::Drop,
        }
    }
}

/// Where a delivered frame came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Original(usize),
    Modified(usize, Tamper),
    Injected,
    Replayed(usize),
    Reflected(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuditEvent {
    Delivered {
        to: Role,
        frame: Vec<u8>,
        provenance: Provenance,
    },
    Dropped(usize),
    /// The recipient had already finished or aborted.
    Discarded { to: Role, provenance: Provenance },
    Reordered,
    NoOp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditEntry {
    pub step: usize,
    pub rule: Rule,
    pub event: AuditEvent,
}

/// Everything observable about one simulated session.
#[derive(Debug)]
pub struct SessionRun {
    pub initiator: HandshakeOutcome,
    pub responder: HandshakeOutcome,
    /// Frames sent by the honest machines, in order.
    pub transcript: Transcript,
    pub log: Vec<AuditEntry>,
    corrupted: Vec<(Role, Session)>,
}

impl SessionRun {
    pub fn outcome(&self, role: Role) -> &HandshakeOutcome {
        match role {
            Role::Initiator => &self.initiator,
            Role::Responder => &self.responder,
        }
    }

    /// Final machine state of a corrupted node.
    pub fn corrupted_state(&self, role: Role) -> Option<&Session> {
        self.corrupted.iter().find(|(r, _)| *r == role).map(|(_, s)| s)
    }

    /// Every delivery is either an honest frame unaltered or explained by
    /// the rule that produced it.
    pub fn audit_is_consistent(&self) -> bool {
        let sent = &self.transcript.entries;
        self.log.iter().all(|entry| {
            let (to, frame, provenance) = match &entry.event {
                AuditEvent::Delivered { to, frame, provenance } => (*to, Some(frame), provenance),
                AuditEvent::Discarded { to, provenance } => (*to, None, provenance),
                _ => return true,
            };
            let original = |seq: &usize| sent.get(*seq);
            match (provenance, &entry.rule) {
                (Provenance::Original(seq), Rule::Deliver) => original(seq).is_some_and(|o| {
                    o.sender.peer() == to && frame.is_none_or(|f| *f == o.frame)
                }),
                (Provenance::Modified(seq, t), Rule::Modify(rt)) => {
                    t == rt
                        && original(seq).is_some_and(|o| {
                            o.sender.peer() == to && frame.is_none_or(|f| *f == t.apply(&o.frame))
                        })
                }
                (Provenance::Replayed(seq), Rule::Replay { index, to: rto }) => {
                    seq == index
                        && *rto == to
                        && original(seq).is_some_and(|o| frame.is_none_or(|f| *f == o.frame))
                }
                (Provenance::Reflected(seq), Rule::Reflect) => original(seq).is_some_and(|o| {
                    o.sender == to && frame.is_none_or(|f| *f == o.frame)
                }),
                (Provenance::Injected, Rule::Inject { to: rto, frame: rf }) => {
                    *rto == to && frame.is_none_or(|f| f == rf)
                }
                _ => false,
            }
        })
    }
}

struct InFlight {
    seq: usize,
    from: Role,
    frame: Vec<u8>,
}

const STEP_LIMIT: usize = 10_000;

/// In-memory network under full adversarial control.
#[derive(Debug, Clone)]
pub struct SimNetwork {
    params: Arc<GroupParams>,
    separation: Separation,
    corrupted: BTreeSet<Role>,
}

impl SimNetwork {
    pub fn new(params: Arc<GroupParams>) -> Self {
        Self {
            params,
            separation: Separation::Directional,
            corrupted: BTreeSet::new(),
        }
    }

    pub fn with_separation(mut self, separation: Separation) -> Self {
        self.separation = separation;
        self
    }

    /// Hands the final state of `role`'s machine to the adversary.
    pub fn corrupt(mut self, role: Role) -> Self {
        self.corrupted.insert(role);
        self
    }

    pub fn params(&self) -> &Arc<GroupParams> {
        &self.params
    }

    /// Runs one session, drawing the initiator's and then the responder's
    /// randomness from `rng`.
    pub fn run_session(
        &self,
        protocol: Protocol,
        initiator: &NodeConfig,
        responder: &NodeConfig,
        script: &Script,
        rng: &mut (impl RngCore + ?Sized),
    ) -> SessionRun {
        let a = initiator
            .session(protocol, Role::Initiator, &self.params, rng)
            .expect("initiator config within capacity");
        let b = responder
            .session(protocol, Role::Responder, &self.params, rng)
            .expect("responder config within capacity");
        self.drive(a, b, script)
    }

    /// Runs one session with each side seeded as a TCP peer with the same
    /// seed would be.
    pub fn run_seeded(
        &self,
        protocol: Protocol,
        initiator: &NodeConfig,
        responder: &NodeConfig,
        script: &Script,
        seed: &[u8],
    ) -> SessionRun {
        let a = initiator
            .session(protocol, Role::Initiator, &self.params, &mut seeded_rng(seed, Role::Initiator))
            .expect("initiator config within capacity");
        let b = responder
            .session(protocol, Role::Responder, &self.params, &mut seeded_rng(seed, Role::Responder))
            .expect("responder config within capacity");
        self.drive(a, b, script)
    }

    /// Drives two prepared machines under `script`.
    pub fn drive(&self, initiator: Session, responder: Session, script: &Script) -> SessionRun {
        let protocol = initiator.protocol();
        let width = self.params.element_width();
        let mut nodes = [
            initiator.with_separation(self.separation),
            responder.with_separation(self.separation),
        ];
        let mut transcript = Transcript::new(protocol);
        let mut queue: VecDeque<InFlight> = VecDeque::new();
        let mut log = Vec::new();

        let first = nodes[0].start().expect("fresh initiator starts");
        transcript.push(Role::Initiator, encode(&first));
        queue.push_back(InFlight {
            seq: 0,
            from: Role::Initiator,
            frame: encode(&first),
        });

        let mut rules = script.rules.iter();
        for step in 0..STEP_LIMIT {
            let rule = match rules.next() {
                Some(r) => r.clone(),
                None if queue.is_empty() => break,
                None => script.fallback.clone(),
            };
            let delivery = match &rule {
                Rule::Deliver => queue
                    .pop_front()
                    .map(|m| (m.from.peer(), m.frame, Provenance::Original(m.seq))),
                Rule::Drop => {
                    let event = match queue.pop_front() {
                        Some(m) => AuditEvent::Dropped(m.seq),
                        None => AuditEvent::NoOp,
                    };
                    log.push(AuditEntry { step, rule, event });
                    continue;
                }
                Rule::Modify(t) => queue.pop_front().map(|m| {
                    (m.from.peer(), t.apply(&m.frame), Provenance::Modified(m.seq, t.clone()))
                }),
                Rule::Inject { to, frame } => Some((*to, frame.clone(), Provenance::Injected)),
                Rule::Replay { index, to } => transcript
                    .entries
                    .get(*index)
                    .map(|e| (*to, e.frame.clone(), Provenance::Replayed(*index))),
                Rule::Reflect => queue
                    .pop_front()
                    .map(|m| (m.from, m.frame, Provenance::Reflected(m.seq))),
                Rule::Reorder => {
                    let event = if queue.len() >= 2 {
                        queue.swap(0, 1);
                        AuditEvent::Reordered
                    } else {
                        AuditEvent::NoOp
                    };
                    log.push(AuditEntry { step, rule, event });
                    continue;
                }
            };
            let Some((to, frame, provenance)) = delivery else {
                log.push(AuditEntry {
                    step,
                    rule,
                    event: AuditEvent::NoOp,
                });
                continue;
            };
            let node = &mut nodes[role_index(to)];
            if node.is_done() {
                log.push(AuditEntry {
                    step,
                    rule,
                    event: AuditEvent::Discarded { to, provenance },
                });
                continue;
            }
            let replies = match decode(&frame, width) {
                Ok(msg) => node.on_message(&msg).unwrap_or_default(),
                Err(e) => {
                    node.abort(HandshakeError::Format(e));
                    Vec::new()
                }
            };
            log.push(AuditEntry {
                step,
                rule,
                event: AuditEvent::Delivered {
                    to,
                    frame,
                    provenance,
                },
            });
            for reply in replies {
                let frame = encode(&reply);
                queue.push_back(InFlight {
                    seq: transcript.len(),
                    from: to,
                    frame: frame.clone(),
                });
                transcript.push(to, frame);
            }
        }

        let [a, b] = nodes;
        let mut corrupted = Vec::new();
        let initiator = snapshot(a, Role::Initiator, &self.corrupted, &mut corrupted);
        let responder = snapshot(b, Role::Responder, &self.corrupted, &mut corrupted);
        SessionRun {
            initiator,
            responder,
            transcript,
            log,
            corrupted,
        }
    }
}

fn snapshot(
    session: Session,
    role: Role,
    corrupt: &BTreeSet<Role>,
    out: &mut Vec<(Role, Session)>,
) -> HandshakeOutcome {
    if corrupt.contains(&role) {
        let outcome = session.current_outcome();
        out.push((role, session));
        outcome
    } else {
        session.finish()
    }
}

fn role_index(role: Role) -> usize {
    match role {
        Role::Initiator => 0,
        Role::Responder => 1,
    }
}

/// Per-role generator for a seeded session:
/// `ChaCha20(SHA-256("ph-seed" || role || seed))` with role `'I'` or `'R'`.
pub fn seeded_rng(seed: &[u8], role: Role) -> ChaCha20Rng {
    use rand::SeedableRng;
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(b"ph-seed");
    h.update(role.short().as_bytes());
    h.update(seed);
    ChaCha20Rng::from_seed(h.finalize().into())
}
