//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use num_bigint::BigUint;
use private_handshake::group::{GroupElement, GroupParams};
use sha2::{Digest, Sha256};

/// RFC 4231 HMAC-SHA-256 cases: key, data, expected MAC, bytes compared.
pub fn rfc4231_cases() -> Vec<(Vec<u8>, Vec<u8>, &'static str, usize)> {
    let big_key = vec![0xaa; 131];
    vec![
        (vec![0x0b; 20], b"Hi There".to_vec(), "b0344c61d8db38535ca8afceaf0bf12b881dc200c9833da726e9376c2e32cff7", 32),
        (
            b"Jefe".to_vec(),
            b"what do ya want for nothing?".to_vec(),
            "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843",
            32,
        ),
        (vec![0xaa; 20], vec![0xdd; 50], "773ea91e36800e46854db8ebd09181a72959098b3ef8c122d9635514ced565fe", 32),
        ((1u8..=25).collect(), vec![0xcd; 50], "82558a389a443c0ea4cc819899f2083a85f0faa3e578f8077a2e3ff46729665b", 32),
        (vec![0x0c; 20], b"Test With Truncation".to_vec(), "a3b6167473100ee06e0c796c2955552b", 16),
        (
            big_key.clone(),
            b"Test Using Larger Than Block-Size Key - Hash Key First".to_vec(),
            "60e431591ee0b67f0d8a26aacbf5b77f8e0bc6213728c5140546040f0ee37f54",
            32,
        ),
        (
            big_key,
            b"This is a test using a larger than block-size key and a larger than block-size data. The key needs to be hashed before being used by the HMAC algorithm.".to_vec(),
            "9b09ffa71b942fcb27635fbcd5b0e944bfdc63644f0713938a7f51535c3a35e2",
            32,
        ),
    ]
}

/// HMAC-SHA-256 written out from its definition.
pub fn hmac_oracle(key: &[u8], msg: &[u8]) -> [u8; 32] {
    let mut block = [0u8; 64];
    if key.len() > 64 {
        block[..32].copy_from_slice(&Sha256::digest(key));
    } else {
        block[..key.len()].copy_from_slice(key);
    }
    let ipad: Vec<u8> = block.iter().map(|b| b ^ 0x36).collect();
    let opad: Vec<u8> = block.iter().map(|b| b ^ 0x5c).collect();
    let inner = Sha256::new().chain_update(&ipad).chain_update(msg).finalize();
    Sha256::new().chain_update(&opad).chain_update(inner).finalize().into()
}

/// `base^e mod p` by multiplying `e` times.
pub fn repeated_multiplication(base: u64, e: u64, p: u64) -> u64 {
    let mut acc = 1 % p;
    for _ in 0..e {
        acc = acc * base % p;
    }
    acc
}

/// `base^e mod p` by left-to-right binary exponentiation on arbitrary
/// precision integers, for exponents too large to multiply out.
pub fn square_and_multiply(base: &BigUint, e: &BigUint, p: &BigUint) -> BigUint {
    let mut acc = BigUint::from(1u32) % p;
    for i in (0..e.bits()).rev() {
        acc = &acc * &acc % p;
        if e.bit(i) {
            acc = &acc * base % p;
        }
    }
    acc
}

pub fn big(bytes: &[u8]) -> BigUint {
    BigUint::from_bytes_be(bytes)
}

pub fn element_big(e: &GroupElement, params: &GroupParams) -> BigUint {
    big(&e.to_bytes(params))
}

pub fn modulus_big(params: &GroupParams) -> BigUint {
    big(&params.encode(params.modulus()))
}

pub fn order_big(params: &GroupParams) -> BigUint {
    big(&params.encode(params.order()))
}
