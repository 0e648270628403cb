//! In-memory adversarial network and the experiments built on it.

pub mod forge;
pub mod fuzz;
pub mod games;
pub mod network;
pub mod stats;

pub use network::{
    seeded_rng, AuditEntry, AuditEvent, Provenance, Rule, Script, SessionRun, SimNetwork, Tamper,
};
