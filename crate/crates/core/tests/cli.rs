use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use private_handshake::group::GroupParams;

const RED: &str = "0101010101010101010101010101010101010101010101010101010101010101";
const BLUE: &str = "0202020202020202020202020202020202020202020202020202020202020202";

struct Listener {
    child: Child,
    addr: String,
    stdout: BufReader<std::process::ChildStdout>,
}

impl Drop for Listener {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ph-peer"))
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn listen(args: &[&str]) -> Listener {
    let mut child = bin()
        .args(["--listen", "127.0.0.1:0"])
        .args(args)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut stdout = BufReader::new(child.stdout.take().unwrap());
    let mut line = String::new();
    stdout.read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").expect("listener address").to_string();
    Listener { child, addr, stdout }
}

/// Runs both ends; returns (connector output, listener success, listener stdout).
fn pair(listen_args: &[&str], connect_args: &[&str]) -> (Output, bool, String) {
    let mut l = listen(listen_args);
    let out = bin().args(["--connect", &l.addr]).args(connect_args).output().unwrap();
    let ok = l.child.wait().unwrap().success();
    let mut rest = String::new();
    l.stdout.read_to_string(&mut rest).unwrap();
    (out, ok, rest)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn peers_report_shared_groups_under_their_own_names() {
    let dir = tempfile::tempdir().unwrap();
    let group = write(dir.path(), "group.toml", &GroupParams::test_group().to_config());
    let alice = write(dir.path(), "alice", &format!("max_memberships = 3\nred:{RED}\nblue:{BLUE}\n"));
    let bob = write(dir.path(), "bob", &format!("# bob's groups\nrouge:{RED}\n"));
    for protocol in ["multi", "single"] {
        let (conn, ok, lout) = pair(
            &["--creds", &bob, "--group", &group, "--protocol", protocol, "--m", "3"],
            &["--creds", &alice, "--group", &group, "--protocol", protocol],
        );
        assert!(conn.status.success() && ok, "{protocol}");
        assert!(stdout(&conn).contains("matched: red\n"), "{protocol}: {}", stdout(&conn));
        assert!(stdout(&conn).contains("session key: established"));
        assert!(lout.contains("matched: rouge\n"), "{protocol}: {lout}");
    }
}

#[test]
fn hidden_membership_is_not_matched() {
    let dir = tempfile::tempdir().unwrap();
    let group = write(dir.path(), "group.toml", &GroupParams::test_group().to_config());
    let alice = write(dir.path(), "alice", &format!("red:{RED}\nblue:{BLUE}\n"));
    let bob = write(dir.path(), "bob", &format!("red:{RED}\n"));
    let (conn, ok, lout) = pair(
        &["--creds", &bob, "--group", &group, "--m", "2"],
        &["--creds", &alice, "--group", &group, "--m", "2", "--hide", "red"],
    );
    assert!(conn.status.success() && ok);
    assert!(stdout(&conn).contains("matched: (none)"));
    assert!(stdout(&conn).contains("session key: none"));
    assert!(lout.contains("matched: (none)"));
}

#[test]
fn seeded_transcripts_agree_with_emitted_vectors() {
    let dir = tempfile::tempdir().unwrap();
    let group = write(dir.path(), "group.toml", &GroupParams::test_group().to_config());
    let alice = write(dir.path(), "alice", &format!("red:{RED}\nblue:{BLUE}\n"));
    let bob = write(dir.path(), "bob", &format!("red:{RED}\n"));
    let (t_conn, t_list, vec) = (dir.path().join("tc"), dir.path().join("tl"), dir.path().join("v"));
    let common = ["--group", group.as_str(), "--m", "2", "--seed", "00ff"];
    let mut largs = vec!["--creds", bob.as_str(), "--transcript", t_list.to_str().unwrap()];
    largs.extend(common);
    let mut cargs = vec!["--creds", alice.as_str(), "--transcript", t_conn.to_str().unwrap()];
    cargs.extend(common);
    let (conn, ok, _) = pair(&largs, &cargs);
    assert!(conn.status.success() && ok);
    let tc = std::fs::read_to_string(&t_conn).unwrap();
    assert_eq!(tc, std::fs::read_to_string(&t_list).unwrap());
    assert_eq!(tc.lines().count(), 4);

    let emitted = bin()
        .args(["--creds", &alice, "--peer-creds", &bob, "--emit-vectors", vec.to_str().unwrap()])
        .args(common)
        .output()
        .unwrap();
    assert!(emitted.status.success());
    let text = std::fs::read_to_string(&vec).unwrap();
    let msgs: String = text.lines().filter(|l| l.starts_with("msg = ")).map(|l| format!("{l}\n")).collect();
    assert_eq!(msgs, tc);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let alice = write(dir.path(), "alice", &format!("red:{RED}\n"));
    let garbage = write(dir.path(), "garbage", "red:nothex\n");
    let bad_group = write(dir.path(), "group.toml", "p = \"17\"\nq = \"0c\"\ng = \"02\"\n");
    let cases: [&[&str]; 4] = [
        &["--connect", "127.0.0.1:1", "--creds", "/nonexistent/creds"],
        &["--connect", "127.0.0.1:1", "--creds", &garbage],
        &["--connect", "127.0.0.1:1", "--creds", &alice, "--hide", "blue"],
        &["--connect", "127.0.0.1:1", "--creds", &alice, "--group", &bad_group],
    ];
    for args in cases {
        let out = bin().args(args).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn unreachable_peer_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let group = write(dir.path(), "group.toml", &GroupParams::test_group().to_config());
    let alice = write(dir.path(), "alice", &format!("red:{RED}\n"));
    // Bind then drop a listener so the port is very likely closed.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let out = bin()
        .args(["--connect", &format!("127.0.0.1:{port}"), "--creds", &alice, "--group", &group])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
