//! One handshake over a TCP connection.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::Arc;
use std::time::Duration;

use rand::rngs::OsRng;
use thiserror::Error;

use crate::credentials::CredentialError;
use crate::group::GroupParams;
use crate::handshake::{HandshakeError, HandshakeOutcome, NodeConfig, Protocol, Role, Session};
use crate::sim::network::seeded_rng;
use crate::transcript::Transcript;
use crate::wire::{encode, read_message, write_message, FormatError, ReadError};

const IO_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Listen(String),
    Connect(String),
}

#[derive(Debug, Clone)]
pub struct PeerConfig {
    pub endpoint: Endpoint,
    pub protocol: Protocol,
    pub node: NodeConfig,
    pub params: Arc<GroupParams>,
    /// Deterministic randomness for tests; `None` uses the OS generator.
    pub seed: Option<Vec<u8>>,
}

#[derive(Debug, Error)]
pub enum PeerError {
    #[error("transport: {0}")]
    Io(#[from] io::Error),
    #[error("malformed message: {0}")]
    Format(#[from] FormatError),
    #[error("handshake aborted: {0}")]
    Handshake(#[from] HandshakeError),
    #[error(transparent)]
    Credentials(#[from] CredentialError),
}

impl From<ReadError> for PeerError {
    fn from(e: ReadError) -> Self {
        match e {
            ReadError::Io(e) => PeerError::Io(e),
            ReadError::Format(e) => PeerError::Format(e),
        }
    }
}

#[derive(Debug)]
pub struct PeerReport {
    pub role: Role,
    pub outcome: HandshakeOutcome,
    /// Frames in send order, both directions.
    pub transcript: Transcript,
}

impl PeerReport {
    /// `matched: a b` or `matched: (none)`.
    pub fn matched_line(&self) -> String {
        if self.outcome.matched.is_empty() {
            "matched: (none)".to_string()
        } else {
            let ids: Vec<&str> = self.outcome.matched.iter().map(String::as_str).collect();
            format!("matched: {}", ids.join(" "))
        }
    }

    pub fn key_line(&self) -> &'static str {
        if self.outcome.matched.is_empty() {
            "session key: none"
        } else {
            "session key: established"
        }
    }
}

/// Builds the local machine for `role`, seeded if the config says so.
pub fn local_session(cfg: &PeerConfig, role: Role) -> Result<Session, CredentialError> {
    match &cfg.seed {
        Some(seed) => cfg
            .node
            .session(cfg.protocol, role, &cfg.params, &mut seeded_rng(seed, role)),
        None => cfg.node.session(cfg.protocol, role, &cfg.params, &mut OsRng),
    }
}

/// Runs `session` to completion over `stream`.
pub fn run_on_stream(
    stream: &mut (impl Read + Write),
    mut session: Session,
    width: usize,
) -> Result<PeerReport, PeerError> {
    let role = session.role();
    let mut transcript = Transcript::new(session.protocol());
    if role == Role::Initiator {
        let first = session.start()?;
        write_message(stream, &first)?;
        transcript.push(role, encode(&first));
    }
    while !session.is_done() {
        let msg = match read_message(stream, width) {
            Ok(msg) => msg,
            Err(ReadError::Format(e)) => return Err(session.abort(e.into()).into()),
            Err(e) => return Err(e.into()),
        };
        transcript.push(role.peer(), encode(&msg));
        for reply in session.on_message(&msg)? {
            write_message(stream, &reply)?;
            transcript.push(role, encode(&reply));
        }
    }
    Ok(PeerReport {
        role,
        outcome: session.finish(),
        transcript,
    })
}

/// Performs one handshake: the connecting side initiates, the listening
/// side accepts a single connection and responds. `on_listen` learns the
/// bound address before the listener blocks.
pub fn run_peer(cfg: &PeerConfig, on_listen: impl FnOnce(SocketAddr)) -> Result<PeerReport, PeerError> {
    let (mut stream, role) = match &cfg.endpoint {
        Endpoint::Connect(addr) => (TcpStream::connect(addr)?, Role::Initiator),
        Endpoint::Listen(addr) => {
            let listener = TcpListener::bind(addr)?;
            on_listen(listener.local_addr()?);
            let (stream, _) = listener.accept()?;
            (stream, Role::Responder)
        }
    };
    stream.set_read_timeout(Some(IO_TIMEOUT))?;
    stream.set_write_timeout(Some(IO_TIMEOUT))?;
    stream.set_nodelay(true)?;
    let session = local_session(cfg, role)?;
    run_on_stream(&mut stream, session, cfg.params.element_width())
}
