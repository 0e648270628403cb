use std::collections::BTreeSet;

use private_handshake::credentials::{new_group_secret, GroupSecret};
use private_handshake::group::GroupParams;
use private_handshake::handshake::{AbortReason, HandshakeError, NodeConfig, Protocol, Role};
use private_handshake::sim::{Script, SimNetwork};
use private_handshake::wire::{decode, MessageType, WireMessage};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn pool(rng: &mut ChaCha20Rng, n: usize) -> Vec<GroupSecret> {
    (0..n).map(|i| new_group_secret(rng, format!("g{i}"))).collect()
}

/// Secrets both sides reveal, named by `me`'s ids.
fn intersection(me: &NodeConfig, other: &NodeConfig, protocol: Protocol) -> BTreeSet<String> {
    let theirs: BTreeSet<[u8; 32]> = other.visible(protocol).iter().map(|s| *s.bytes()).collect();
    me.visible(protocol)
        .iter()
        .filter(|s| theirs.contains(s.bytes()))
        .map(|s| s.id().to_string())
        .collect()
}

fn random_multi_node(pool: &[GroupSecret], m: usize, rng: &mut ChaCha20Rng) -> NodeConfig {
    let k = rng.gen_range(0..=m.min(pool.len()));
    let mut node = NodeConfig::new(pool.choose_multiple(rng, k).cloned().collect(), m);
    for s in &node.memberships {
        if rng.gen_bool(0.2) {
            node.hidden.insert(s.id().to_string());
        }
    }
    node
}

fn frames(run: &private_handshake::sim::SessionRun, params: &GroupParams) -> Vec<WireMessage> {
    run.transcript
        .entries
        .iter()
        .map(|e| decode(&e.frame, params.element_width()).unwrap())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn multi_outcome_is_the_visible_intersection(seed in any::<u64>(), m in 1usize..8) {
        let params = GroupParams::test_group();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let pool = pool(&mut rng, 10);
        let a = random_multi_node(&pool, m, &mut rng);
        let b = random_multi_node(&pool, m, &mut rng);
        let run = SimNetwork::new(params).run_session(Protocol::Multi, &a, &b, &Script::passive(), &mut rng);
        prop_assert_eq!(&run.initiator.matched, &intersection(&a, &b, Protocol::Multi));
        prop_assert_eq!(&run.responder.matched, &intersection(&b, &a, Protocol::Multi));
        prop_assert_eq!(&run.initiator.session_key, &run.responder.session_key);
        prop_assert!(run.initiator.abort.is_none() && run.responder.abort.is_none());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn single_matches_exactly_when_groups_agree(seed in any::<u64>()) {
        let params = GroupParams::modp2048();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let pool = pool(&mut rng, 2);
        let pick = |rng: &mut ChaCha20Rng| -> Vec<GroupSecret> {
            pool.get(rng.gen_range(0..=pool.len())).cloned().into_iter().collect()
        };
        let a = NodeConfig::new(pick(&mut rng), 1);
        let b = NodeConfig::new(pick(&mut rng).iter().map(|s| s.aliased("theirs")).collect(), 1);
        let run = SimNetwork::new(params).run_session(Protocol::Single, &a, &b, &Script::passive(), &mut rng);
        let want = intersection(&a, &b, Protocol::Single);
        prop_assert_eq!(&run.initiator.matched, &want);
        prop_assert_eq!(run.responder.matched.len(), want.len());
        if !want.is_empty() {
            prop_assert_eq!(&run.initiator.session_key, &run.responder.session_key);
        }
        prop_assert_eq!(run.transcript.len(), 4);
    }
}

#[test]
fn hidden_memberships_never_match() {
    let params = GroupParams::test_group();
    let net = SimNetwork::new(params);
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let pool = pool(&mut rng, 6);
    for _ in 0..1000 {
        let mut a = NodeConfig::new(pool.clone(), 6);
        let count = rng.gen_range(1..=6);
        let hidden: Vec<String> = pool
            .choose_multiple(&mut rng, count)
            .map(|s| s.id().to_string())
            .collect();
        a.hidden.extend(hidden.iter().cloned());
        let b = NodeConfig::new(pool.clone(), 6);
        let run = net.run_session(Protocol::Multi, &a, &b, &Script::passive(), &mut rng);
        for id in &hidden {
            assert!(!run.initiator.matched.contains(id));
            assert!(!run.responder.matched.contains(id));
        }
        assert_eq!(run.initiator.matched.len() + hidden.len(), 6);
    }
}

#[test]
fn padding_never_matches_padding() {
    let params = GroupParams::test_group();
    let net = SimNetwork::new(params);
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    let empty = NodeConfig::new(Vec::new(), 8);
    for _ in 0..1000 {
        let run = net.run_session(Protocol::Multi, &empty, &empty, &Script::passive(), &mut rng);
        assert!(run.initiator.matched.is_empty());
        assert!(run.responder.matched.is_empty());
    }
}

#[test]
fn multi_traffic_is_fixed_by_m() {
    let params = GroupParams::test_group();
    let net = SimNetwork::new(params.clone());
    let mut rng = ChaCha20Rng::seed_from_u64(13);
    let pool = pool(&mut rng, 5);
    for k in 0..=5 {
        let a = NodeConfig::new(pool[..k].to_vec(), 5);
        let b = NodeConfig::new(pool.clone(), 5);
        let run = net.run_session(Protocol::Multi, &a, &b, &Script::passive(), &mut rng);
        let msgs = frames(&run, &params);
        let kinds: Vec<MessageType> = msgs.iter().map(|m| m.msg_type).collect();
        assert_eq!(
            kinds,
            [MessageType::DhMulti, MessageType::DhMulti, MessageType::TagSetInitiator, MessageType::TagSetResponder]
        );
        assert_eq!(msgs[2].tags().unwrap().len(), 5);
        assert_eq!(msgs[3].tags().unwrap().len(), 5);
        assert_eq!(run.initiator.matched.len(), k);
    }
}

#[test]
fn tags_do_not_repeat_across_sessions() {
    let params = GroupParams::modp2048();
    let net = SimNetwork::new(params.clone());
    let mut rng = ChaCha20Rng::seed_from_u64(14);
    let pool = pool(&mut rng, 3);
    let node = NodeConfig::new(pool.clone(), 4);
    let mut seen = BTreeSet::new();
    for _ in 0..12 {
        let run = net.run_session(Protocol::Multi, &node, &node, &Script::passive(), &mut rng);
        assert_eq!(run.initiator.matched.len(), 3);
        for msg in &frames(&run, &params)[2..] {
            for tag in msg.tags().unwrap() {
                assert!(seen.insert(*tag.as_bytes()), "tag repeated");
            }
        }
    }
    assert_eq!(seen.len(), 12 * 2 * 4);
}

#[test]
fn mismatched_capacity_is_rejected() {
    let params = GroupParams::test_group();
    let mut rng = ChaCha20Rng::seed_from_u64(15);
    let pool = pool(&mut rng, 2);
    let a = NodeConfig::new(pool.clone(), 2);
    let b = NodeConfig::new(pool, 3);
    let run = SimNetwork::new(params).run_session(Protocol::Multi, &a, &b, &Script::passive(), &mut rng);
    assert!(run.initiator.matched.is_empty() && run.responder.matched.is_empty());
    let sized = |r: &Option<AbortReason>| matches!(r, Some(AbortReason::Protocol(HandshakeError::Size { .. })));
    assert!(sized(&run.initiator.abort) || sized(&run.responder.abort));
}

#[test]
fn invalid_element_still_gets_a_full_reply() {
    let params = GroupParams::test_group();
    let mut rng = ChaCha20Rng::seed_from_u64(16);
    let red = new_group_secret(&mut rng, "red");
    for protocol in [Protocol::Single, Protocol::Multi] {
        let node = NodeConfig::new(vec![red.clone()], 2);
        let msg_type = match protocol {
            Protocol::Single => MessageType::DhSingle,
            Protocol::Multi => MessageType::DhMulti,
        };
        for bad in [1u8, 5, 0, 23] {
            let mut b = node.session(protocol, Role::Responder, &params, &mut rng).unwrap();
            let replies = b.on_message(&WireMessage::new(msg_type, vec![bad])).unwrap();
            assert_eq!(replies.len(), 1);
            assert_eq!(replies[0].msg_type, msg_type);
            assert!(!b.is_done());
        }
    }
}

#[test]
fn separately_built_params_interoperate() {
    let a_params = GroupParams::test_group();
    let b_params = GroupParams::test_group();
    let mut rng = ChaCha20Rng::seed_from_u64(17);
    let red = new_group_secret(&mut rng, "red");
    let node = NodeConfig::new(vec![red], 1);
    let a = node.session(Protocol::Multi, Role::Initiator, &a_params, &mut rng).unwrap();
    let b = node.session(Protocol::Multi, Role::Responder, &b_params, &mut rng).unwrap();
    let run = SimNetwork::new(a_params).drive(a, b, &Script::passive());
    assert_eq!(run.initiator.matched, BTreeSet::from(["red".to_string()]));
}
