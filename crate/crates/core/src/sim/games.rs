//! Distinguishing games for detection resistance, indistinguishability to
//! eavesdroppers and unlinkability.
//!
//! Adversaries are limited to strategies that remain feasible at full group
//! size: running the protocol with the credentials they hold and comparing
//! what they see. Searching the exponent or generator space would win in a
//! toy group for reasons that say nothing about the protocol.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};

use crate::credentials::{new_group_secret, GroupSecret};
use crate::group::GroupParams;
use crate::handshake::{HandshakeOutcome, NodeConfig, Protocol, Role, Separation};
use crate::kdf::Tag;
use crate::sim::fuzz::distinct_secrets;
use crate::sim::network::{Script, SimNetwork};
use crate::transcript::Transcript;
use crate::wire::{encode, MessageType, WireMessage};

/// Tag-set size used by the multi-protocol games.
pub const GAME_CAPACITY: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Game {
    Detection,
    Eavesdropper,
    Linkability,
}

impl Game {
    pub fn name(self) -> &'static str {
        match self {
            Game::Detection => "detection",
            Game::Eavesdropper => "eavesdropper",
            Game::Linkability => "linkability",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distinguisher {
    /// Ignores everything and flips a coin.
    RandomGuess,
    /// Uses its credentials and the transcript as described per game.
    Transcript,
}

/// `Control` hands the adversary what it needs to win:
/// membership in G for detection, a symmetric membership test for the
/// eavesdropper, and node-specific secrets for linkability.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Honest,
    Control,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameResult {
    pub game: Game,
    pub protocol: Protocol,
    pub variant: Variant,
    pub trials: u64,
    pub successes: u64,
}

impl GameResult {
    pub fn advantage(&self) -> f64 {
        (self.successes as f64 / self.trials as f64 - 0.5).abs()
    }

    /// Three standard deviations of a fair coin's success rate.
    pub fn threshold(&self) -> f64 {
        1.5 / (self.trials as f64).sqrt()
    }

    /// Honest variants pass below the threshold, controls above it.
    pub fn pass(&self) -> bool {
        let above = self.advantage() > self.threshold();
        match self.variant {
            Variant::Honest => !above,
            Variant::Control => above,
        }
    }

    /// `game,protocol,trials,successes,advantage,threshold,pass`
    pub fn record(&self) -> String {
        let game = match self.variant {
            Variant::Honest => self.game.name().to_string(),
            Variant::Control => format!("{}-control", self.game.name()),
        };
        format!(
            "{},{},{},{},{:.6},{:.6},{}",
            game,
            self.protocol,
            self.trials,
            self.successes,
            self.advantage(),
            self.threshold(),
            self.pass()
        )
    }
}

impl fmt::Display for GameResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.record())
    }
}

/// Membership set for one side of a game: `core` plus fresh filler groups
/// for the multi protocol.
fn node(core: &[GroupSecret], protocol: Protocol, rng: &mut (impl RngCore + ?Sized)) -> NodeConfig {
    let mut memberships = core.to_vec();
    if protocol == Protocol::Multi && memberships.len() < GAME_CAPACITY {
        memberships.push(new_group_secret(rng, "other"));
    }
    NodeConfig::new(memberships, GAME_CAPACITY)
}

/// Fallback when the credentials give no answer: one fixed bit of the
/// first message.
fn feature_bit(transcript: &Transcript) -> bool {
    transcript
        .entries
        .first()
        .and_then(|e| e.frame.last())
        .is_some_and(|b| b & 1 == 1)
}

fn random_tag(rng: &mut (impl RngCore + ?Sized)) -> Tag {
    let mut b = [0u8; 32];
    rng.fill_bytes(&mut b);
    Tag::from_bytes(b)
}

/// The simulator of the detection game: a uniform non-identity element,
/// then random tags, whatever the adversary sends.
fn against_simulator(
    adversary: &NodeConfig,
    protocol: Protocol,
    params: &Arc<GroupParams>,
    rng: &mut (impl RngCore + ?Sized),
) -> (HandshakeOutcome, Transcript) {
    let mut session = adversary
        .session(protocol, Role::Responder, params, rng)
        .expect("adversary config within capacity");
    let mut transcript = Transcript::new(protocol);
    let dh = match protocol {
        Protocol::Single => MessageType::DhSingle,
        Protocol::Multi => MessageType::DhMulti,
    };
    let first = WireMessage::new(dh, params.random_element(rng).to_bytes(params));
    let second = match protocol {
        Protocol::Single => WireMessage::confirm(Role::Initiator, random_tag(rng).as_bytes()),
        Protocol::Multi => {
            let tags: Vec<Tag> = (0..GAME_CAPACITY).map(|_| random_tag(rng)).collect();
            WireMessage::tag_set(Role::Initiator, &tags)
        }
    };
    for msg in [first, second] {
        transcript.push(Role::Initiator, encode(&msg));
        for reply in session.on_message(&msg).unwrap_or_default() {
            transcript.push(Role::Responder, encode(&reply));
        }
    }
    (session.finish(), transcript)
}

/// One detection trial. The adversary is the responder; the initiator is a
/// member of G (real world) or the simulator, by fair coin. The adversary
/// says "real" if its own run of the protocol found a common group.
fn detection_trial(
    params: &Arc<GroupParams>,
    protocol: Protocol,
    variant: Variant,
    distinguisher: Distinguisher,
    rng: &mut (impl RngCore + ?Sized),
) -> bool {
    let secrets = distinct_secrets(params, 2, rng);
    let (g, foreign) = (&secrets[0], &secrets[1]);
    let adversary = match variant {
        Variant::Honest => node(std::slice::from_ref(foreign), protocol, rng),
        Variant::Control => node(&[g.aliased("G")], protocol, rng),
    };
    let real = rng.gen_bool(0.5);
    let (outcome, transcript) = if real {
        let member = node(std::slice::from_ref(g), protocol, rng);
        let run = SimNetwork::new(params.clone()).run_session(
            protocol,
            &member,
            &adversary,
            &Script::passive(),
            rng,
        );
        (run.responder, run.transcript)
    } else {
        against_simulator(&adversary, protocol, params, rng)
    };
    let guess = match distinguisher {
        Distinguisher::RandomGuess => rng.gen_bool(0.5),
        Distinguisher::Transcript if !outcome.matched.is_empty() => true,
        Distinguisher::Transcript => feature_bit(&transcript),
    };
    guess == real
}

fn tags_of(msg: &WireMessage) -> Vec<Tag> {
    match msg.msg_type {
        MessageType::ConfirmInitiator | MessageType::ConfirmResponder => {
            msg.confirm_tag().into_iter().collect()
        }
        _ => msg.tags().unwrap_or_default(),
    }
}

/// True if some tag appears in both directions of `transcript`.
fn tags_coincide(transcript: &Transcript, params: &GroupParams) -> bool {
    let Ok(msgs) = transcript.messages(params.element_width()) else {
        return false;
    };
    let mut by_dir: [BTreeSet<[u8; 32]>; 2] = Default::default();
    for (sender, msg) in &msgs {
        let i = usize::from(*sender == Role::Responder);
        by_dir[i].extend(tags_of(msg).iter().map(|t| *t.as_bytes()));
    }
    !by_dir[0].is_disjoint(&by_dir[1])
}

/// One eavesdropper trial. j is in G; i is in G or in another group by
/// fair coin. The eavesdropper holds G's secret but only sees the
/// transcript, so the test left to it is comparing the two directions.
fn eavesdropper_trial(
    params: &Arc<GroupParams>,
    protocol: Protocol,
    variant: Variant,
    distinguisher: Distinguisher,
    rng: &mut (impl RngCore + ?Sized),
) -> bool {
    let secrets = distinct_secrets(params, 2, rng);
    let (g, other) = (&secrets[0], &secrets[1]);
    let member = rng.gen_bool(0.5);
    let i = node(std::slice::from_ref(if member { g } else { other }), protocol, rng);
    let j = node(std::slice::from_ref(g), protocol, rng);
    let separation = match variant {
        Variant::Honest => Separation::Directional,
        Variant::Control => Separation::Symmetric,
    };
    let run = SimNetwork::new(params.clone())
        .with_separation(separation)
        .run_session(protocol, &i, &j, &Script::passive(), rng);
    let guess = match distinguisher {
        Distinguisher::RandomGuess => rng.gen_bool(0.5),
        Distinguisher::Transcript if tags_coincide(&run.transcript, params) => true,
        Distinguisher::Transcript => feature_bit(&run.transcript),
    };
    guess == member
}

/// What a participating adversary remembers of a run: its own verdict and
/// the other node's frames.
fn fingerprint(outcome: &HandshakeOutcome, transcript: &Transcript) -> (BTreeSet<String>, Vec<Vec<u8>>) {
    let frames = transcript
        .entries
        .iter()
        .filter(|e| e.sender == Role::Initiator)
        .map(|e| e.frame.clone())
        .collect();
    (outcome.matched.clone(), frames)
}

/// One linkability trial. The adversary shares every group with node i and
/// runs once with i for reference, then once with i or with a second node
/// i' that has the same memberships, by fair coin. It answers "i" when the
/// challenge run agrees with the reference in verdict, and in any frame the
/// node sent (for the identical-secret case nothing else separates them).
fn linkability_trial(
    params: &Arc<GroupParams>,
    protocol: Protocol,
    variant: Variant,
    distinguisher: Distinguisher,
    rng: &mut (impl RngCore + ?Sized),
) -> bool {
    let secrets = distinct_secrets(params, 2, rng);
    let extra = new_group_secret(rng, "other");
    let core: Vec<GroupSecret> = match protocol {
        Protocol::Single => vec![secrets[0].clone()],
        Protocol::Multi => vec![secrets[0].clone(), extra],
    };
    let i = NodeConfig::new(core.clone(), GAME_CAPACITY);
    let i_prime = match variant {
        Variant::Honest => i.clone(),
        Variant::Control => {
            let mut own = vec![GroupSecret::from_bytes(secrets[0].id(), *secrets[1].bytes())];
            if protocol == Protocol::Multi {
                own.push(new_group_secret(rng, "other"));
            }
            NodeConfig::new(own, GAME_CAPACITY)
        }
    };
    let adversary = NodeConfig::new(
        core.iter().map(|s| s.aliased(format!("adv-{}", s.id()))).collect(),
        GAME_CAPACITY,
    );
    let net = SimNetwork::new(params.clone());
    let reference = net.run_session(protocol, &i, &adversary, &Script::passive(), rng);
    let is_i = rng.gen_bool(0.5);
    let challenged = if is_i { &i } else { &i_prime };
    let challenge = net.run_session(protocol, challenged, &adversary, &Script::passive(), rng);
    let guess = match distinguisher {
        Distinguisher::RandomGuess => rng.gen_bool(0.5),
        Distinguisher::Transcript => {
            let (ref_matched, ref_frames) = fingerprint(&reference.responder, &reference.transcript);
            let (ch_matched, ch_frames) = fingerprint(&challenge.responder, &challenge.transcript);
            let shares_frame = ch_frames.iter().any(|f| ref_frames.contains(f));
            ref_matched == ch_matched || shares_frame
        }
    };
    guess == is_i
}

/// Plays `trials` rounds of `game`.
pub fn play(
    game: Game,
    protocol: Protocol,
    variant: Variant,
    distinguisher: Distinguisher,
    trials: u64,
    params: &Arc<GroupParams>,
    rng: &mut (impl RngCore + ?Sized),
) -> GameResult {
    let trial = match game {
        Game::Detection => detection_trial,
        Game::Eavesdropper => eavesdropper_trial,
        Game::Linkability => linkability_trial,
    };
    let successes = (0..trials)
        .filter(|_| trial(params, protocol, variant, distinguisher, rng))
        .count() as u64;
    GameResult {
        game,
        protocol,
        variant,
        trials,
        successes,
    }
}

pub fn detection_game(
    trials: u64,
    protocol: Protocol,
    variant: Variant,
    distinguisher: Distinguisher,
    params: &Arc<GroupParams>,
    rng: &mut (impl RngCore + ?Sized),
) -> GameResult {
    play(Game::Detection, protocol, variant, distinguisher, trials, params, rng)
}

pub fn eavesdropper_game(
    trials: u64,
    protocol: Protocol,
    variant: Variant,
    distinguisher: Distinguisher,
    params: &Arc<GroupParams>,
    rng: &mut (impl RngCore + ?Sized),
) -> GameResult {
    play(Game::Eavesdropper, protocol, variant, distinguisher, trials, params, rng)
}

pub fn linkability_game(
    trials: u64,
    protocol: Protocol,
    variant: Variant,
    distinguisher: Distinguisher,
    params: &Arc<GroupParams>,
    rng: &mut (impl RngCore + ?Sized),
) -> GameResult {
    play(Game::Linkability, protocol, variant, distinguisher, trials, params, rng)
}
