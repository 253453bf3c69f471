use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

const BIN: &str = env!("CARGO_BIN_EXE_placid");

fn begin_end() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/begin-end.json")
}

fn placid(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn golden() -> String {
    let text = std::fs::read_to_string(begin_end()).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["expected_digest"].as_str().unwrap().to_owned()
}

#[test]
fn shipped_scenario_matches_its_golden_digest() {
    let o = placid(&["run", "--scenario", begin_end().to_str().unwrap(), "--json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["trace_digest"], golden());
    assert_eq!(summary["matched"], true);
}

#[test]
fn trace_files_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let traces: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let path = dir.path().join(format!("t{i}.jsonl"));
            let o = placid(&["run", "--scenario", begin_end().to_str().unwrap(), "--trace", path.to_str().unwrap()]);
            assert_eq!(code(&o), 0);
            std::fs::read(path).unwrap()
        })
        .collect();
    assert!(!traces[0].is_empty());
    assert_eq!(traces[0], traces[1]);
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(begin_end()).unwrap().replace(&golden(), &"0".repeat(64));
    let wrong = write(dir.path(), "wrong.json", &text);
    assert_eq!(code(&placid(&["run", "--scenario", wrong.to_str().unwrap()])), 1);

    let bad = write(dir.path(), "bad.json", r#"{"participants":["a"],"script":[{"at":0,"actor":"a","op":"juggle"}]}"#);
    let o = placid(&["run", "--scenario", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("step 0"));

    let empty = write(dir.path(), "empty.json", r#"{"participants":["a"],"script":[]}"#);
    assert_eq!(code(&placid(&["run", "--scenario", empty.to_str().unwrap()])), 0);

    assert_eq!(code(&placid(&["run", "--scenario", "/nonexistent/x.json"])), 2);
    assert_eq!(code(&placid(&["serve", "--static-dir", "."])), 2, "static files need --http");
}

#[test]
fn recorded_runs_replay_and_detect_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log");
    let o = placid(&["run", "--scenario", begin_end().to_str().unwrap(), "--log-dir", log.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let o = placid(&["replay", "--log-dir", log.to_str().unwrap(), "--json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["trace_digest"], golden());
    assert_eq!(code(&placid(&["replay", "--log-dir", log.to_str().unwrap(), "--expect", "deadbeef"])), 1);
    assert_eq!(code(&placid(&["replay", "--log-dir", dir.path().join("none").to_str().unwrap()])), 2);
}

#[test]
fn serve_with_missing_descriptor_names_the_path() {
    let o = placid(&["serve", "--listen", "127.0.0.1:0", "--descriptor", "/no/such/descriptor.json"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("/no/such/descriptor.json"));
}

fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

#[test]
fn client_to_dead_address_is_a_runtime_error() {
    let addr = format!("127.0.0.1:{}", free_port());
    let o = Command::new(BIN)
        .args(["client", "--connect", &addr, "--user", "alice"])
        .stdin(Stdio::null())
        .output()
        .unwrap();
    assert_eq!(code(&o), 3);
}

struct Killed(std::process::Child);

impl Drop for Killed {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn serve_then_client_receives_hello() {
    let dir = tempfile::tempdir().unwrap();
    let descriptor = write(
        dir.path(),
        "d.json",
        &{
            let mut d = placid_core::microtools::Descriptor::with_users(&["alice"]);
            d.users[0].password = "secret".into();
            serde_json::to_string(&d).unwrap()
        },
    );
    let addr = format!("127.0.0.1:{}", free_port());
    let mut serve = Killed(
        Command::new(BIN)
            .args(["serve", "--listen", &addr, "--descriptor", descriptor.to_str().unwrap(), "--tick-ms", "5"])
            .stderr(Stdio::piped())
            .spawn()
            .unwrap(),
    );
    let stderr = serve.0.stderr.take().unwrap();
    let mut lines = BufReader::new(stderr).lines();
    let deadline = Instant::now() + Duration::from_secs(20);
    loop {
        let line = lines.next().expect("server is running").unwrap();
        if line.contains("listening") {
            break;
        }
        assert!(Instant::now() < deadline);
    }
    std::thread::spawn(move || lines.for_each(drop));

    let o = Command::new(BIN)
        .args(["client", "--connect", &addr, "--user", "alice", "--password", "secret"])
        .stdin(Stdio::null())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let first = String::from_utf8_lossy(&o.stdout).lines().next().unwrap().to_owned();
    assert!(first.contains(r#""type":"auth.hello""#), "{first}");

    let o = Command::new(BIN)
        .args(["client", "--connect", &addr, "--user", "alice", "--password", "wrong"])
        .stdin(Stdio::null())
        .output()
        .unwrap();
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stdout).contains("AuthFailed"));
}
