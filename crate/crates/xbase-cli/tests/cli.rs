//! End-to-end tests driving the `xbase` binary. Every invocation is a
//! separate process, so persistence across commands exercises the
//! stabilised roots for real.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};

const MEMBERS: &str = include_str!("fixtures/members.xml");
const MEMBERS_SCHEMA: &str = include_str!("fixtures/members.xsd");

struct Output {
    stdout: Vec<u8>,
    stderr: String,
    code: i32,
}

impl Output {
    fn stdout_text(&self) -> String {
        String::from_utf8_lossy(&self.stdout).trim_end().to_string()
    }
}

fn xbase(home: &Path, args: &[&str], stdin: Option<&[u8]>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_xbase"));
    cmd.arg("--home")
        .arg(home)
        .args(args)
        .env_remove("XBASE_HOME")
        .env_remove("XBASE_NODE_IP")
        .env_remove("XBASE_ROOT_STORE_KIND")
        .env_remove("XBASE_PORT")
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .stdin(if stdin.is_some() { Stdio::piped() } else { Stdio::null() });
    let mut child = cmd.spawn().expect("spawn xbase");
    if let Some(bytes) = stdin {
        child.stdin.take().unwrap().write_all(bytes).unwrap();
    }
    let out = child.wait_with_output().unwrap();
    Output {
        stdout: out.stdout,
        stderr: String::from_utf8_lossy(&out.stderr).to_string(),
        code: out.status.code().unwrap_or(-1),
    }
}

fn ok(home: &Path, args: &[&str], stdin: Option<&[u8]>) -> Output {
    let out = xbase(home, args, stdin);
    assert_eq!(out.code, 0, "command {args:?} failed: {}", out.stderr);
    out
}

/// Starts `serve --port 0` and returns the child plus the bound port.
fn serve(home: &Path, extra: &[&str]) -> (Child, u16) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_xbase"));
    cmd.arg("--home")
        .arg(home)
        .args(extra)
        .args(["serve", "--port", "0"])
        .env_remove("XBASE_HOME")
        .env_remove("XBASE_ROOT_STORE_KIND")
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    let mut child = cmd.spawn().expect("spawn serve");
    let stdout = child.stdout.take().unwrap();
    let mut line = String::new();
    BufReader::new(stdout).read_line(&mut line).unwrap();
    let port: u16 = line
        .trim()
        .rsplit(':')
        .next()
        .and_then(|p| p.parse().ok())
        .unwrap_or_else(|| panic!("no port in serve banner {line:?}"));
    (child, port)
}

struct Homes {
    _dir: tempfile::TempDir,
    base: PathBuf,
}

impl Homes {
    fn new() -> Homes {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().to_path_buf();
        Homes { _dir: dir, base }
    }

    fn home(&self, name: &str) -> PathBuf {
        self.base.join(name)
    }

    fn file(&self, name: &str, contents: &str) -> PathBuf {
        let path = self.base.join(name);
        std::fs::write(&path, contents).unwrap();
        path
    }
}

#[test]
fn put_get_round_trip_with_printed_key() {
    let homes = Homes::new();
    let home = homes.home("h");
    let key = ok(&home, &["put"], Some(b"some bytes")).stdout_text();
    assert_eq!(key.len(), 64);
    let out = ok(&home, &["get", &key], None);
    assert_eq!(out.stdout, b"some bytes");
}

#[test]
fn encrypt_and_decrypt_pipeline_restores_the_input() {
    let homes = Homes::new();
    let home = homes.home("h");
    let key = ok(&home, &["put", "--encrypt", "invert"], Some(b"Vangelis,29")).stdout_text();
    let plain = ok(&home, &["get", &key, "--decrypt", "invert"], None);
    assert_eq!(plain.stdout, b"Vangelis,29");
    // Without decryption the stored bytes are reversed.
    let raw = ok(&home, &["get", &key], None);
    assert_eq!(raw.stdout, b"92,silegnaV");
}

#[test]
fn exit_codes_follow_the_error_kinds() {
    let homes = Homes::new();
    let home = homes.home("h");
    ok(&home, &["put"], Some(b"dup"));
    let dup = xbase(&home, &["put"], Some(b"dup"));
    assert_eq!(dup.code, 16, "{}", dup.stderr);
    assert!(dup.stderr.contains("KeyExists"), "{}", dup.stderr);

    let bad_key = xbase(&home, &["get", "abc"], None);
    assert_eq!(bad_key.code, 13);
    assert!(bad_key.stderr.contains("IllegalKey"), "{}", bad_key.stderr);

    let missing = xbase(&home, &["lookup", "nobody"], None);
    assert_eq!(missing.code, 20);
    assert!(missing.stderr.contains("NameNotFound"), "{}", missing.stderr);

    let key = "0".repeat(64);
    let not_found = xbase(&home, &["get", &key], None);
    assert_eq!(not_found.code, 15);
    assert!(not_found.stderr.contains("KeyNotFound"), "{}", not_found.stderr);

    let rot13 = xbase(&home, &["put", "--encrypt", "rot13"], Some(b"x"));
    assert_eq!(rot13.code, 19);
    assert!(rot13.stderr.contains("InterpretationError"), "{}", rot13.stderr);
}

#[test]
fn id_is_stable_across_invocations_and_bindings_survive_restart() {
    let homes = Homes::new();
    let home = homes.home("h");
    let id1 = ok(&home, &["id"], None).stdout_text();
    let id2 = ok(&home, &["id"], None).stdout_text();
    assert_eq!(id1, id2);
    assert_eq!(id1.len(), 32);

    let key = ok(&home, &["put"], Some(b"named payload")).stdout_text();
    ok(&home, &["bind", "payload", &key], None);
    // A later process resolves the binding.
    let keys = ok(&home, &["lookup", "payload"], None).stdout_text();
    assert_eq!(keys, key);
    ok(&home, &["unbind", "payload", &key], None);
    assert_eq!(xbase(&home, &["lookup", "payload"], None).code, 20);
}

#[test]
fn shred_writes_fragment_files_and_assemble_restores_the_document() {
    let homes = Homes::new();
    let home = homes.home("h");
    let doc = homes.file("members.xml", MEMBERS);
    let schema = homes.file("members.xsd", MEMBERS_SCHEMA);
    let out_dir = homes.home("frags");

    let out = ok(
        &home,
        &[
            "shred",
            doc.to_str().unwrap(),
            "--schema",
            schema.to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
        ],
        None,
    );
    let files: Vec<String> = out.stdout_text().lines().map(str::to_string).collect();
    assert_eq!(files.len(), 10);
    // Fragment file names replace '/' with '_'.
    assert!(files.iter().all(|f| f.ends_with(".xml") && !f[out_dir.to_str().unwrap().len()..].contains("person/")));
    assert!(files
        .iter()
        .any(|f| f.ends_with("127.0.0.1-XBaseMembers_teachingStaff_person-2.xml")));

    let assembled = ok(&home, &["assemble", out_dir.to_str().unwrap()], None);
    let text = String::from_utf8(assembled.stdout).unwrap();
    assert!(text.contains("<name> Graham Kirby</name>"));
    assert!(text.contains("<town>Kingsbarns</town>"));
    assert!(!text.contains("XBaseRef"));
}

#[test]
fn xstore_xget_xupdate_by_recorded_name() {
    let homes = Homes::new();
    let home = homes.home("h");
    let doc = homes.file("members.xml", MEMBERS);
    let schema = homes.file("members.xsd", MEMBERS_SCHEMA);

    let name = ok(
        &home,
        &["xstore", doc.to_str().unwrap(), "--schema", schema.to_str().unwrap()],
        None,
    )
    .stdout_text();
    assert_eq!(name, "127.0.0.1-XBaseMembersOuterMostTag-1");

    let fetched = ok(&home, &["xget", &name], None);
    let text = String::from_utf8(fetched.stdout).unwrap();
    assert!(text.contains("<age>29</age>"));

    // Edit one value and update; only one fragment changes.
    let edited = homes.file("edited.xml", &text.replace("<age>29</age>", "<age>30</age>"));
    for (strategy, expected_changed) in [("store-feedback", 1), ("source-compare", 0)] {
        // The second pass sees the already-updated state: nothing changes.
        let out = ok(
            &home,
            &["xupdate", &name, edited.to_str().unwrap(), "--strategy", strategy],
            None,
        );
        let first_line = out.stdout_text().lines().next().unwrap().to_string();
        assert_eq!(first_line, format!("changed {expected_changed}"), "{strategy}");
    }
    let latest = ok(&home, &["xget", &name], None);
    assert!(String::from_utf8(latest.stdout).unwrap().contains("<age>30</age>"));
}

#[test]
fn gstore_and_gget_round_trip_a_graph_file() {
    let homes = Homes::new();
    let home = homes.home("h");
    let graph = homes.file(
        "graph.json",
        r#"{"root":"p","nodes":[
            {"id":"p","type":"person","fields":[
                {"name":"name","type":"java.lang.String","text":"Vangelis"},
                {"name":"address","type":"Address","ref":"a"}]},
            {"id":"a","type":"address","fields":[
                {"name":"address","type":"java.lang.String","text":"St Andrews"}]}]}"#,
    );
    let name = ok(&home, &["gstore", graph.to_str().unwrap()], None).stdout_text();
    assert_eq!(name, "127.0.0.1-person-1");
    let out = ok(&home, &["gget", &name], None);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("\"text\": \"Vangelis\""), "{text}");
    assert!(text.contains("\"ref\": \"127.0.0.1-address-1\""), "{text}");
}

#[test]
fn remote_host_flow_via_serve_share_and_targets() {
    let homes = Homes::new();
    let ouzo = homes.home("ouzo");
    let tsip = homes.home("tsip");

    // ouzo: local root store, switched shareable, then served.
    let id = ok(&ouzo, &["id"], None).stdout_text();
    ok(&ouzo, &["share", &id, "on"], None);
    let (mut daemon, port) = serve(&ouzo, &[]);
    let url = format!("http://127.0.0.1:{port}");

    // tsipouro: proxy root store targeting ouzo.
    let proxy_args = ["--root-store-kind", "proxy"];
    ok(&tsip, &[&proxy_args[..], &["target", "add", &url]].concat(), None);
    let listed = ok(&tsip, &[&proxy_args[..], &["target", "list"]].concat(), None).stdout_text();
    assert_eq!(listed, url);

    // A put through the proxy lands on ouzo; the get comes back through it.
    let key = ok(
        &tsip,
        &[&proxy_args[..], &["put"]].concat(),
        Some(b"remote payload"),
    )
    .stdout_text();
    let got = ok(&tsip, &[&proxy_args[..], &["get", &key]].concat(), None);
    assert_eq!(got.stdout, b"remote payload");

    // Direct remote access sees the same bytes.
    let direct = ok(&tsip, &["get", &key, "--url", &url], None);
    assert_eq!(direct.stdout, b"remote payload");

    // Switching shareability off remotely cuts access.
    ok(&tsip, &["share", &id, "off", "--url", &url], None);
    let refused = xbase(&tsip, &["get", &key, "--url", &url], None);
    assert_eq!(refused.code, 10, "{}", refused.stderr);

    daemon.kill().ok();
}

#[test]
fn three_host_chain_redirects_puts_and_gets() {
    let homes = Homes::new();
    let panda = homes.home("panda");
    let ouzo = homes.home("ouzo");
    let tsip = homes.home("tsip");
    let proxy_args = ["--root-store-kind", "proxy"];

    // panda: a shareable local store behind a daemon.
    let panda_id = ok(&panda, &["id"], None).stdout_text();
    ok(&panda, &["share", &panda_id, "on"], None);
    let (mut panda_daemon, panda_port) = serve(&panda, &[]);

    // ouzo: a shareable proxy root that knows about panda, behind a daemon.
    ok(
        &ouzo,
        &[&proxy_args[..], &["target", "add", &format!("http://127.0.0.1:{panda_port}")]]
            .concat(),
        None,
    );
    let ouzo_id = ok(&ouzo, &[&proxy_args[..], &["id"]].concat(), None).stdout_text();
    ok(&ouzo, &[&proxy_args[..], &["share", &ouzo_id, "on"]].concat(), None);
    let (mut ouzo_daemon, ouzo_port) = serve(&ouzo, &proxy_args);

    // tsipouro: a proxy root that knows about ouzo only.
    ok(
        &tsip,
        &[&proxy_args[..], &["target", "add", &format!("http://127.0.0.1:{ouzo_port}")]]
            .concat(),
        None,
    );
    let key = ok(&tsip, &[&proxy_args[..], &["put"]].concat(), Some(MEMBERS.as_bytes()))
        .stdout_text();
    // The far store on panda holds the document.
    let direct = ok(&tsip, &["get", &key, "--url", &format!("http://127.0.0.1:{panda_port}")], None);
    assert_eq!(direct.stdout, MEMBERS.as_bytes());
    // And the get traverses tsipouro -> ouzo -> panda.
    let chained = ok(&tsip, &[&proxy_args[..], &["get", &key]].concat(), None);
    assert_eq!(chained.stdout, MEMBERS.as_bytes());

    panda_daemon.kill().ok();
    ouzo_daemon.kill().ok();
}

#[test]
fn bench_reports_fragment_counts_and_strategy_agreement() {
    let homes = Homes::new();
    let home = homes.home("h");
    let members = ok(&home, &["bench", "xbasemembers"], None).stdout_text();
    let counts_line = members
        .lines()
        .find(|l| l.starts_with("fragments created"))
        .expect("fragment counts row");
    let numbers: Vec<&str> = counts_line.split_whitespace().collect();
    assert_eq!(&numbers[numbers.len() - 2..], &["10", "2"]);

    for scenario in ["edit", "add", "delete", "noop"] {
        let report = ok(&home, &["bench", "update", "--scenario", scenario], None).stdout_text();
        assert!(report.contains("strategies agree: true"), "{scenario}: {report}");
        let expected = match scenario {
            "edit" => "changed  1",
            "add" => "changed  3",
            "delete" => "changed  1",
            _ => "changed  0",
        };
        assert!(report.contains(expected), "{scenario}: {report}");
    }
}
