//! Private handshakes: two nodes learn which secret groups they share and
//! nothing else, with no trusted third party online.
//!
//! Two protocols are provided. [`handshake::SingleHandshake`] tests one
//! membership by running Diffie-Hellman over a generator derived from the
//! group secret and using key confirmation as the membership test.
//! [`handshake::MultiHandshake`] runs Diffie-Hellman over a public generator
//! and then exchanges HMAC tags of a fixed-size, padded and shuffled array of
//! group secrets.
//!
//! Both machines are sans-I/O. [`peer`] runs them over TCP and [`sim`] runs
//! them under a scripted network adversary.

pub mod credentials;
pub mod group;
pub mod handshake;
pub mod kdf;
pub mod peer;
pub mod sim;
pub mod transcript;
pub mod vectors;
pub mod wire;
