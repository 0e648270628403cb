//! One member producing a complete two-party run by itself.

use std::sync::Arc;

use rand::RngCore;

use crate::credentials::GroupSecret;
use crate::group::{derive_generator, mod_exp, Exponent, GroupParams};
use crate::handshake::{NodeConfig, Protocol, Role};
use crate::kdf::{keyed_tag, role_hash, HashLabel, SessionKey, Tag};
use crate::sim::network::{Script, SimNetwork};
use crate::transcript::Transcript;
use crate::wire::{decode, WireMessage};

/// A forged transcript and the initiator exponent the forger chose.
#[derive(Debug, Clone)]
pub struct Forgery {
    pub transcript: Transcript,
    pub witness: Exponent,
}

/// Plays both ends of a session with `member`'s credentials. Everything a
/// second party would contribute is something the forger can produce.
pub fn forge_with_witness(
    member: &NodeConfig,
    protocol: Protocol,
    params: &Arc<GroupParams>,
    rng: &mut (impl RngCore + ?Sized),
) -> Forgery {
    let a = member
        .session(protocol, Role::Initiator, params, rng)
        .expect("member config within capacity");
    let b = member
        .session(protocol, Role::Responder, params, rng)
        .expect("member config within capacity");
    let witness = a.exponent().clone();
    let run = SimNetwork::new(params.clone()).drive(a, b, &Script::passive());
    Forgery {
        transcript: run.transcript,
        witness,
    }
}

pub fn forge_transcript(
    member: &NodeConfig,
    protocol: Protocol,
    params: &Arc<GroupParams>,
    rng: &mut (impl RngCore + ?Sized),
) -> Transcript {
    forge_with_witness(member, protocol, params, rng).transcript
}

/// Whether `transcript` is a run in `secret`'s group with initiator
/// exponent `witness`: the first element is the group's generator raised
/// to `witness`, and the tags in both directions are the ones a member
/// derives from the resulting shared value.
pub fn consistent_with_secret(
    transcript: &Transcript,
    params: &GroupParams,
    secret: &GroupSecret,
    witness: &Exponent,
) -> bool {
    let width = params.element_width();
    let msgs = match transcript
        .entries
        .iter()
        .map(|e| decode(&e.frame, width))
        .collect::<Result<Vec<_>, _>>()
    {
        Ok(m) if m.len() == 4 => m,
        _ => return false,
    };
    let Ok(peer) = crate::group::validate_element(&msgs[1].payload, params) else {
        return false;
    };
    let shared = mod_exp(&peer, witness, params);
    match transcript.protocol {
        Protocol::Single => {
            let Ok(g) = derive_generator(secret, params) else {
                return false;
            };
            let expect_first = mod_exp(&g, witness, params).to_bytes(params);
            let tag_i = role_hash(HashLabel::ConfirmInitiator, &shared, params);
            let tag_r = role_hash(HashLabel::ConfirmResponder, &shared, params);
            msgs[0].payload == expect_first && msgs[2].payload == tag_i && msgs[3].payload == tag_r
        }
        Protocol::Multi => {
            let expect_first = params.generator_pow(witness).to_bytes(params);
            let k = SessionKey::from_bytes(role_hash(HashLabel::MultiKey, &shared, params));
            let contains = |msg: &WireMessage, dir: Role| {
                let want: Tag = keyed_tag(&k, dir, secret.bytes());
                msg.tags().is_ok_and(|tags| tags.contains(&want))
            };
            msgs[0].payload == expect_first
                && contains(&msgs[2], Role::Initiator)
                && contains(&msgs[3], Role::Responder)
        }
    }
}

/// Histograms of transcript features for comparing corpora: each DH
/// element's low byte, their joint value modulo 16, and the top nibble of
/// the first tag in each tag-bearing message.
pub fn corpus_histograms(corpus: &[Transcript], params: &GroupParams) -> Vec<(&'static str, Vec<u64>)> {
    let width = params.element_width();
    let mut first = vec![0u64; 256];
    let mut second = vec![0u64; 256];
    let mut joint = vec![0u64; 256];
    let mut tag_i = vec![0u64; 16];
    let mut tag_r = vec![0u64; 16];
    for t in corpus {
        let Ok(msgs) = t.messages(width) else { continue };
        if msgs.len() != 4 {
            continue;
        }
        let low = |i: usize| *msgs[i].1.payload.last().unwrap_or(&0) as usize;
        first[low(0)] += 1;
        second[low(1)] += 1;
        joint[(low(0) % 16) * 16 + low(1) % 16] += 1;
        for (hist, i) in [(&mut tag_i, 2), (&mut tag_r, 3)] {
            let msg = &msgs[i].1;
            let lead = if msg.msg_type.is_dh() {
                None
            } else if let Ok(tag) = msg.confirm_tag() {
                Some(tag.as_bytes()[0])
            } else {
                msg.tags().ok().and_then(|t| t.first().map(|t| t.as_bytes()[0]))
            };
            if let Some(b) = lead {
                hist[(b >> 4) as usize] += 1;
            }
        }
    }
    vec![
        ("first_element", first),
        ("second_element", second),
        ("element_pair", joint),
        ("initiator_tag", tag_i),
        ("responder_tag", tag_r),
    ]
}
