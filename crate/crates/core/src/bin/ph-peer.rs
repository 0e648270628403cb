use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{ArgGroup, Parser};

use private_handshake::credentials::CredentialStore;
use private_handshake::group::GroupParams;
use private_handshake::handshake::{NodeConfig, Protocol, Role};
use private_handshake::peer::{run_peer, Endpoint, PeerConfig};
use private_handshake::transcript::Transcript;
use private_handshake::vectors::emit_vectors;

const DEFAULT_M: usize = 8;

/// Run one private handshake with a peer over TCP.
#[derive(Parser, Debug)]
#[command(name = "ph-peer", version)]
#[command(group(ArgGroup::new("endpoint").args(["listen", "connect"])))]
struct Args {
    /// Accept one connection on ADDR and act as responder.
    #[arg(long, value_name = "ADDR")]
    listen: Option<String>,
    /// Connect to ADDR and act as initiator.
    #[arg(long, value_name = "ADDR")]
    connect: Option<String>,
    #[arg(long, default_value = "multi")]
    protocol: Protocol,
    /// Credential file (`id:hex` per line).
    #[arg(long, value_name = "FILE")]
    creds: PathBuf,
    /// Tag-set size for the multi protocol; defaults to the credential
    /// file's `max_memberships`, else 8.
    #[arg(long)]
    m: Option<usize>,
    /// Group parameter file (TOML with hex p, q, g); defaults to MODP-2048.
    #[arg(long, value_name = "FILE")]
    group: Option<PathBuf>,
    /// Do not reveal this membership (repeatable).
    #[arg(long = "hide", value_name = "ID")]
    hide: Vec<String>,
    /// Hex seed for deterministic randomness. Testing only.
    #[arg(long, value_name = "HEX")]
    seed: Option<String>,
    /// Write a test vector for a session against --peer-creds and exit.
    #[arg(long, value_name = "FILE", requires_all = ["peer_creds", "seed"])]
    emit_vectors: Option<PathBuf>,
    /// The other side's credentials, used only with --emit-vectors.
    #[arg(long, value_name = "FILE")]
    peer_creds: Option<PathBuf>,
    /// Write the session's frames to FILE in vector-file `msg` syntax.
    #[arg(long, value_name = "FILE")]
    transcript: Option<PathBuf>,
}

fn load_node(path: &Path, m: Option<usize>, hide: &[String]) -> Result<NodeConfig, String> {
    let store = CredentialStore::load(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let m = m.or(store.max_memberships).unwrap_or(DEFAULT_M);
    let hidden: BTreeSet<String> = hide.iter().cloned().collect();
    for id in &hidden {
        if !store.secrets.iter().any(|s| s.id() == id) {
            return Err(format!("--hide {id}: no such membership in {}", path.display()));
        }
    }
    let mut node = NodeConfig::new(store.secrets, m);
    node.hidden = hidden;
    Ok(node)
}

fn render_transcript(t: &Transcript) -> String {
    let mut out = String::new();
    for e in &t.entries {
        let dir = match e.sender {
            Role::Initiator => "I>R",
            Role::Responder => "R>I",
        };
        let _ = writeln!(out, "msg = {dir} {}", hex::encode(&e.frame));
    }
    out
}

fn run(args: Args) -> Result<ExitCode, String> {
    let params: Arc<GroupParams> = match &args.group {
        Some(path) => Arc::new(GroupParams::load(path).map_err(|e| format!("{}: {e}", path.display()))?),
        None => GroupParams::modp2048(),
    };
    let node = load_node(&args.creds, args.m, &args.hide)?;
    let seed = args
        .seed
        .as_deref()
        .map(|s| hex::decode(s).map_err(|e| format!("--seed: {e}")))
        .transpose()?;

    if let Some(out) = &args.emit_vectors {
        let peer_path = args.peer_creds.as_ref().expect("clap requires --peer-creds");
        let peer = load_node(peer_path, Some(node.max_memberships), &[])?;
        let seed = seed.expect("clap requires --seed");
        let (a, b) = match args.listen {
            Some(_) => (&peer, &node),
            None => (&node, &peer),
        };
        let vectors = emit_vectors(&seed, args.protocol, &params, a, b).map_err(|e| e.to_string())?;
        std::fs::write(out, vectors.render()).map_err(|e| format!("{}: {e}", out.display()))?;
        println!("wrote {}", out.display());
        return Ok(ExitCode::SUCCESS);
    }

    let endpoint = match (args.listen, args.connect) {
        (Some(a), None) => Endpoint::Listen(a),
        (None, Some(a)) => Endpoint::Connect(a),
        _ => return Err("one of --listen or --connect is required".into()),
    };
    let cfg = PeerConfig {
        endpoint,
        protocol: args.protocol,
        node,
        params,
        seed,
    };
    let result = run_peer(&cfg, |addr| {
        println!("listening on {addr}");
        let _ = std::io::stdout().flush();
    });
    match result {
        Ok(report) => {
            println!("{}", report.matched_line());
            println!("{}", report.key_line());
            if let Some(path) = &args.transcript {
                std::fs::write(path, render_transcript(&report.transcript))
                    .map_err(|e| format!("{}: {e}", path.display()))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            eprintln!("ph-peer: {e}");
            Ok(ExitCode::FAILURE)
        }
    }
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("ph-peer: {msg}");
            ExitCode::from(2)
        }
    }
}
