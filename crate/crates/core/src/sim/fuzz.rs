//! Randomized adversary scripts and the safety check applied to their runs.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};

use crate::credentials::{new_group_secret, GroupSecret, SECRET_LEN};
use crate::group::{derive_generator, GroupParams};
use crate::handshake::{NodeConfig, Protocol, Role};
use crate::kdf::Tag;
use crate::sim::network::{Rule, Script, SessionRun, SimNetwork, Tamper};
use crate::wire::{encode, MessageType, WireMessage};

/// Group secrets whose single-protocol generators are pairwise distinct.
///
/// In a small group two random secrets often map to the same generator,
/// which makes them the same group as far as the single protocol can tell.
/// Drawing from such a pool keeps "different group" meaningful there.
pub fn distinct_secrets(
    params: &GroupParams,
    count: usize,
    rng: &mut (impl RngCore + ?Sized),
) -> Vec<GroupSecret> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        assert!(attempts < 100 * count + 1000, "group too small for {count} distinct generators");
        let secret = new_group_secret(rng, format!("g{}", out.len()));
        let Ok(g) = derive_generator(&secret, params) else {
            continue;
        };
        if seen.insert(g.to_bytes(params)) {
            out.push(secret);
        }
    }
    out
}

/// A random node drawn from `pool`. Each membership gets a node-local alias
/// now and then, since ids are local names.
pub fn random_node(
    pool: &[GroupSecret],
    protocol: Protocol,
    m: usize,
    rng: &mut (impl RngCore + ?Sized),
) -> NodeConfig {
    let count = match protocol {
        Protocol::Single => rng.gen_range(0..=1.min(pool.len())),
        Protocol::Multi => rng.gen_range(0..=m.min(pool.len())),
    };
    let memberships: Vec<GroupSecret> = pool
        .choose_multiple(rng, count)
        .map(|s| {
            if rng.gen_bool(0.25) {
                s.aliased(format!("{}-alias", s.id()))
            } else {
                s.clone()
            }
        })
        .collect();
    let mut cfg = NodeConfig::new(memberships, m);
    if protocol == Protocol::Multi {
        for s in &cfg.memberships {
            if rng.gen_bool(0.1) {
                cfg.hidden.insert(s.id().to_string());
            }
        }
    }
    cfg
}

/// A syntactically valid frame forged by an adversary without secrets.
pub fn junk_frame(params: &GroupParams, m: usize, rng: &mut (impl RngCore + ?Sized)) -> Vec<u8> {
    let msg = match rng.gen_range(0..6) {
        0 => WireMessage::new(MessageType::DhSingle, params.random_element(rng).to_bytes(params)),
        1 => WireMessage::new(MessageType::DhMulti, params.random_element(rng).to_bytes(params)),
        2 => WireMessage::confirm(Role::Initiator, random_tag(rng).as_bytes()),
        3 => WireMessage::confirm(Role::Responder, random_tag(rng).as_bytes()),
        4 => {
            let tags: Vec<Tag> = (0..m).map(|_| random_tag(rng)).collect();
            WireMessage::tag_set(Role::Initiator, &tags)
        }
        _ => {
            let tags: Vec<Tag> = (0..m).map(|_| random_tag(rng)).collect();
            WireMessage::tag_set(Role::Responder, &tags)
        }
    };
    encode(&msg)
}

fn random_tag(rng: &mut (impl RngCore + ?Sized)) -> Tag {
    let mut b = [0u8; 32];
    rng.fill_bytes(&mut b);
    Tag::from_bytes(b)
}

fn random_tamper(rng: &mut (impl RngCore + ?Sized)) -> Tamper {
    match rng.gen_range(0..4) {
        0 => Tamper::FlipBit(rng.gen_range(0..4096)),
        1 => Tamper::Truncate(rng.gen_range(0..300)),
        2 => {
            let mut extra = vec![0u8; rng.gen_range(1..4)];
            rng.fill_bytes(&mut extra);
            Tamper::Append(extra)
        }
        _ => Tamper::SetByte {
            offset: rng.gen_range(0..300),
            value: rng.gen(),
        },
    }
}

fn random_role(rng: &mut (impl RngCore + ?Sized)) -> Role {
    if rng.gen_bool(0.5) {
        Role::Initiator
    } else {
        Role::Responder
    }
}

/// A random script. Injected frames come from `splices` (frames of other
/// sessions) or are forged on the spot.
pub fn random_script(
    params: &GroupParams,
    m: usize,
    splices: &[Vec<u8>],
    rng: &mut (impl RngCore + ?Sized),
) -> Script {
    let len = rng.gen_range(0..10);
    let rules = (0..len)
        .map(|_| match rng.gen_range(0..100) {
            0..=29 => Rule::Deliver,
            30..=39 => Rule::Drop,
            40..=59 => Rule::Modify(random_tamper(rng)),
            60..=74 => {
                let frame = match splices.choose(rng) {
                    Some(f) if rng.gen_bool(0.7) => f.clone(),
                    _ => junk_frame(params, m, rng),
                };
                Rule::Inject {
                    to: random_role(rng),
                    frame,
                }
            }
            75..=84 => Rule::Replay {
                index: rng.gen_range(0..4),
                to: random_role(rng),
            },
            85..=92 => Rule::Reflect,
            _ => Rule::Reorder,
        })
        .collect();
    let fallback = if rng.gen_bool(0.8) { Rule::Deliver } else { Rule::Drop };
    Script { rules, fallback }
}

/// A matched group the two nodes do not actually share.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub role: Role,
    pub id: String,
}

fn visible_secrets(cfg: &NodeConfig, protocol: Protocol) -> BTreeSet<[u8; SECRET_LEN]> {
    cfg.visible(protocol).into_iter().map(|s| *s.bytes()).collect()
}

/// Every id in either outcome that is not a group both nodes revealed.
/// Groups are compared by secret, since ids are only local names.
pub fn safety_violations(
    run: &SessionRun,
    protocol: Protocol,
    initiator: &NodeConfig,
    responder: &NodeConfig,
) -> Vec<Violation> {
    let a = visible_secrets(initiator, protocol);
    let b = visible_secrets(responder, protocol);
    let shared: BTreeSet<_> = a.intersection(&b).copied().collect();
    let mut out = Vec::new();
    for (role, cfg) in [(Role::Initiator, initiator), (Role::Responder, responder)] {
        for id in &run.outcome(role).matched {
            let ok = cfg
                .visible(protocol)
                .into_iter()
                .any(|s| s.id() == id && shared.contains(s.bytes()));
            if !ok {
                out.push(Violation {
                    role,
                    id: id.clone(),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FuzzReport {
    pub runs: usize,
    /// Runs in which some outcome exceeded the true intersection.
    pub violating_runs: usize,
    /// Runs where at least one side matched something.
    pub matched_runs: usize,
    /// Runs whose audit log did not explain every delivery.
    pub audit_failures: usize,
}

const SPLICE_POOL: usize = 64;

/// Runs `runs` sessions between random nodes under random scripts.
pub fn safety_fuzz(
    net: &SimNetwork,
    protocol: Protocol,
    runs: usize,
    pool: &[GroupSecret],
    m: usize,
    rng: &mut (impl RngCore + ?Sized),
) -> FuzzReport {
    let mut report = FuzzReport::default();
    let mut splices: Vec<Vec<u8>> = Vec::new();
    for _ in 0..runs {
        let a = random_node(pool, protocol, m, rng);
        let b = random_node(pool, protocol, m, rng);
        let script = random_script(net.params(), m, &splices, rng);
        let run = net.run_session(protocol, &a, &b, &script, rng);
        report.runs += 1;
        if !safety_violations(&run, protocol, &a, &b).is_empty() {
            report.violating_runs += 1;
        }
        if !run.initiator.matched.is_empty() || !run.responder.matched.is_empty() {
            report.matched_runs += 1;
        }
        if !run.audit_is_consistent() {
            report.audit_failures += 1;
        }
        for entry in run.transcript.entries {
            if splices.len() < SPLICE_POOL {
                splices.push(entry.frame);
            } else {
                let i = rng.gen_range(0..SPLICE_POOL);
                splices[i] = entry.frame;
            }
        }
    }
    report
}
