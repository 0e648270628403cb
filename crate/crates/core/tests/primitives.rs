mod common;

use common::*;
use num_bigint::BigUint;
use private_handshake::group::{
    derive_generator, mod_exp, random_exponent, validate_element, Exponent, GroupElement, GroupError, GroupParams,
    Natural,
};
use private_handshake::handshake::Role;
use private_handshake::kdf::{hmac_sha256, keyed_tag, role_hash, HashLabel, SessionKey};
use private_handshake::credentials::GroupSecret;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

const SUBGROUP_23: [u64; 11] = [1, 2, 3, 4, 6, 8, 9, 12, 13, 16, 18];

fn elem(v: u64, p: &GroupParams) -> GroupElement {
    GroupElement::new(Natural::from_u64(v), p).unwrap()
}

#[test]
fn hmac_matches_rfc4231() {
    for (key, data, expected, len) in rfc4231_cases() {
        assert_eq!(hex::encode(&hmac_sha256(&key, &data)[..len]), expected);
        assert_eq!(hex::encode(&hmac_oracle(&key, &data)[..len]), expected);
    }
}

#[test]
fn role_hash_is_sha256_of_label_and_element() {
    let p = GroupParams::test_group();
    let v = elem(13, &p);
    let mut seen = Vec::new();
    for label in HashLabel::ALL {
        let mut h = Sha256::new();
        h.update(label.as_bytes());
        h.update([13u8]);
        let want: [u8; 32] = h.finalize().into();
        assert_eq!(role_hash(label, &v, &p), want);
        seen.push(want);
    }
    seen.sort();
    seen.dedup();
    assert_eq!(seen.len(), HashLabel::ALL.len());
}

#[test]
fn toy_exponentiation_agrees_with_repeated_multiplication() {
    let p = GroupParams::test_group();
    for base in SUBGROUP_23 {
        let b = elem(base, &p);
        for e in 1..11 {
            let x = Exponent::from_u64(e, &p).unwrap();
            let want = repeated_multiplication(base, e, 23);
            assert_eq!(element_big(&mod_exp(&b, &x, &p), &p), BigUint::from(want));
            assert_eq!(
                element_big(&p.fixed_base_pow(&b, &x), &p),
                BigUint::from(want),
                "fixed base {base}^{e}"
            );
        }
    }
    for e in 1..11 {
        let x = Exponent::from_u64(e, &p).unwrap();
        assert_eq!(element_big(&p.generator_pow(&x), &p), BigUint::from(repeated_multiplication(2, e, 23)));
    }
}

#[test]
fn toy_validation_accepts_exactly_the_nonidentity_subgroup() {
    let p = GroupParams::test_group();
    for v in 0u8..=255 {
        let ok = validate_element(&[v], &p).is_ok();
        let want = v != 1 && SUBGROUP_23.contains(&(v as u64));
        assert_eq!(ok, want, "value {v}");
    }
    assert!(matches!(validate_element(&[5], &p), Err(GroupError::Subgroup)));
    assert!(validate_element(&[], &p).is_err());
    assert!(validate_element(&[0, 2], &p).is_err());
}

#[test]
fn derived_generators_are_valid_and_vary_with_the_secret() {
    let p = GroupParams::modp2048();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let mut seen = Vec::new();
    for i in 0..8 {
        let s = private_handshake::credentials::new_group_secret(&mut rng, format!("g{i}"));
        let g = derive_generator(&s, &p).unwrap();
        let bytes = g.to_bytes(&p);
        assert!(validate_element(&bytes, &p).is_ok());
        // Same secret under another id derives the same generator.
        assert_eq!(derive_generator(&s.aliased("other"), &p).unwrap(), g);
        seen.push(bytes);
    }
    seen.sort();
    seen.dedup();
    assert_eq!(seen.len(), 8);
}

#[test]
fn random_exponents_stay_in_range() {
    let p = GroupParams::modp2048();
    let q = order_big(&p);
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    for _ in 0..200 {
        let x = big(&random_exponent(&mut rng, &p).to_bytes(&p));
        assert!(x >= BigUint::from(1u32) && x < q);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn hmac_agrees_with_oracle(key in prop::collection::vec(any::<u8>(), 0..200), msg in prop::collection::vec(any::<u8>(), 0..300)) {
        prop_assert_eq!(hmac_sha256(&key, &msg), hmac_oracle(&key, &msg));
    }

    #[test]
    fn keyed_tag_is_hmac_over_direction_and_secret(k in any::<[u8; 32]>(), secret in any::<[u8; 32]>()) {
        let key = SessionKey::from_bytes(k);
        for (role, byte) in [(Role::Initiator, b'I'), (Role::Responder, b'R')] {
            let mut msg = vec![byte];
            msg.extend_from_slice(&secret);
            prop_assert_eq!(*keyed_tag(&key, role, &secret).as_bytes(), hmac_oracle(&k, &msg));
        }
        prop_assert_ne!(keyed_tag(&key, Role::Initiator, &secret), keyed_tag(&key, Role::Responder, &secret));
    }

    #[test]
    fn secret_round_trips_through_bytes(bytes in any::<[u8; 32]>()) {
        let s = GroupSecret::from_bytes("x", bytes);
        prop_assert_eq!(s.bytes(), &bytes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn modp_exponentiation_agrees_with_square_and_multiply(seed in any::<u64>()) {
        let p = GroupParams::modp2048();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x = random_exponent(&mut rng, &p);
        let base = p.generator_pow(&random_exponent(&mut rng, &p));
        let (xb, modulus) = (big(&x.to_bytes(&p)), modulus_big(&p));
        let want = square_and_multiply(&element_big(&base, &p), &xb, &modulus);
        prop_assert_eq!(element_big(&mod_exp(&base, &x, &p), &p), want.clone());
        // The third call goes through a cached table.
        for _ in 0..3 {
            prop_assert_eq!(element_big(&p.fixed_base_pow(&base, &x), &p), want.clone());
        }
        let want_g = square_and_multiply(&BigUint::from(2u32), &xb, &modulus);
        prop_assert_eq!(element_big(&p.generator_pow(&x), &p), want_g);
    }
}
