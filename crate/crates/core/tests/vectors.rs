mod common;

use common::hmac_oracle;
use private_handshake::credentials::{new_group_secret, PaddedArray, Slot};
use private_handshake::group::{Exponent, GroupParams};
use private_handshake::handshake::{MultiHandshake, NodeConfig, Protocol, Role, Session, SingleHandshake};
use private_handshake::vectors::{emit_vectors, record_session, VectorError, VectorFile};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

fn labelled(label: &[u8], value: &[u8]) -> [u8; 32] {
    Sha256::new().chain_update(label).chain_update(value).finalize().into()
}

fn frame(msg_type: u8, payload: &[u8]) -> Vec<u8> {
    let mut out = vec![0x01, msg_type];
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload);
    out
}

/// p = 23, g = 2, x = 3, y = 4: elements 8 and 16, shared value 2^12 = 2.
#[test]
fn single_hand_example() {
    let p = GroupParams::test_group();
    let side = |role, e| {
        Session::Single(SingleHandshake::from_parts(
            role,
            p.clone(),
            Some("red".into()),
            p.generator(),
            Exponent::from_u64(e, &p).unwrap(),
            [0xdd; 32],
        ))
    };
    let v = record_session(side(Role::Initiator, 3), side(Role::Responder, 4), &p, b"hand");
    let (h3, h4, h5) = (labelled(b"ph-h3", &[2]), labelled(b"ph-h4", &[2]), labelled(b"ph-h5", &[2]));
    assert_eq!(v.initiator.element, [8]);
    assert_eq!(v.responder.element, [16]);
    assert_eq!(v.initiator.shared.as_deref(), Some(&[2u8][..]));
    assert_eq!(v.responder.shared.as_deref(), Some(&[2u8][..]));
    assert_eq!(v.initiator.tags, [h4]);
    assert_eq!(v.responder.tags, [h5]);
    assert_eq!(v.initiator.key, h3);
    assert_eq!(v.responder.key, h3);
    let frames: Vec<(Role, Vec<u8>)> = vec![
        (Role::Initiator, frame(0x01, &[8])),
        (Role::Responder, frame(0x01, &[16])),
        (Role::Initiator, frame(0x02, &h4)),
        (Role::Responder, frame(0x03, &h5)),
    ];
    assert_eq!(v.messages, frames);
    assert!(v.initiator.matched.contains("red") && v.responder.matched.contains("red"));
    let text = v.render();
    let back = VectorFile::parse(&text).unwrap();
    assert_eq!(back, v);
    back.replay().unwrap();
}

#[test]
fn multi_hand_example() {
    let p = GroupParams::test_group();
    let red = [7u8; 32];
    let array = |pad: u8| {
        PaddedArray::from_slots(vec![
            Slot { secret: [pad; 32], id: None },
            Slot { secret: red, id: Some("red".into()) },
        ])
    };
    let a = MultiHandshake::from_parts(Role::Initiator, p.clone(), array(1), Exponent::from_u64(3, &p).unwrap(), [0; 32]);
    let b = MultiHandshake::from_parts(Role::Responder, p.clone(), array(2), Exponent::from_u64(4, &p).unwrap(), [0; 32]);
    let v = record_session(Session::Multi(a), Session::Multi(b), &p, b"");
    let k = labelled(b"ph-h", &[2]);
    let tag = |dir: u8, s: [u8; 32]| {
        let mut msg = vec![dir];
        msg.extend_from_slice(&s);
        hmac_oracle(&k, &msg)
    };
    assert_eq!(v.initiator.key, k);
    assert_eq!(v.initiator.tags, [tag(b'I', [1; 32]), tag(b'I', red)]);
    assert_eq!(v.responder.tags, [tag(b'R', [2; 32]), tag(b'R', red)]);
    let mut payload = vec![0, 2];
    payload.extend_from_slice(&tag(b'I', [1; 32]));
    payload.extend_from_slice(&tag(b'I', red));
    assert_eq!(v.messages[2], (Role::Initiator, frame(0x12, &payload)));
    assert_eq!(v.initiator.matched.iter().collect::<Vec<_>>(), ["red"]);
    VectorFile::parse(&v.render()).unwrap().replay().unwrap();
}

#[test]
fn emitted_vectors_are_reproducible_and_replayable() {
    let p = GroupParams::modp2048();
    let mut rng = ChaCha20Rng::seed_from_u64(31);
    let red = new_group_secret(&mut rng, "red");
    let blue = new_group_secret(&mut rng, "blue");
    for protocol in [Protocol::Single, Protocol::Multi] {
        let a = NodeConfig::new(vec![red.clone(), blue.clone()], 3);
        let b = NodeConfig::new(vec![blue.aliased("azul")], 3);
        let first = emit_vectors(b"seed", protocol, &p, &a, &b).unwrap();
        let again = emit_vectors(b"seed", protocol, &p, &a, &b).unwrap();
        assert_eq!(first.render(), again.render());
        let other = emit_vectors(b"seed2", protocol, &p, &a, &b).unwrap();
        assert_ne!(first.messages, other.messages);
        VectorFile::parse(&first.render()).unwrap().replay().unwrap();
    }
}

#[test]
fn edited_vectors_fail_replay() {
    let p = GroupParams::test_group();
    let mut rng = ChaCha20Rng::seed_from_u64(32);
    let red = new_group_secret(&mut rng, "red");
    let node = NodeConfig::new(vec![red], 2);
    let v = emit_vectors(b"x", Protocol::Multi, &p, &node, &node).unwrap();
    let text = v.render();

    let mut bad = VectorFile::parse(&text).unwrap();
    bad.initiator.key[0] ^= 1;
    assert!(matches!(bad.replay(), Err(VectorError::Mismatch(_))));

    let mut bad = VectorFile::parse(&text).unwrap();
    let last = bad.messages.len() - 1;
    let end = bad.messages[last].1.len() - 1;
    bad.messages[last].1[end] ^= 1;
    assert!(matches!(bad.replay(), Err(VectorError::Mismatch(_))));

    let without_key: String = text.lines().filter(|l| !l.starts_with("R.key")).map(|l| format!("{l}\n")).collect();
    assert!(matches!(VectorFile::parse(&without_key), Err(VectorError::Missing(_))));
    assert!(matches!(VectorFile::parse("protocol = triple\n"), Err(VectorError::Parse { .. })));
}
