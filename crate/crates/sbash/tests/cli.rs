//! CLI surface tests: exit codes, help, flag resolution, and an
//! end-to-end ingest -> eval -> report run against the shipped fixtures.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

const BIN: &str = env!("CARGO_BIN_EXE_sbash");

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(rel)
}

fn run(args: &[&str]) -> (i32, String, String) {
    let output = Command::new(BIN)
        .args(args)
        .env_remove("SBASH_PROFILE")
        .env_remove("SBASH_LLM_URL")
        .env_remove("SBASH_EMBED_URL")
        .output()
        .expect("binary runs");
    (
        output.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&output.stdout).into_owned(),
        String::from_utf8_lossy(&output.stderr).into_owned(),
    )
}

#[test]
fn help_exits_zero_and_lists_subcommands() {
    let (code, stdout, _) = run(&["--help"]);
    assert_eq!(code, 0);
    for sub in ["serve", "ingest", "capture", "eval", "report"] {
        assert!(
            stdout.contains(sub),
            "missing subcommand {sub} in:\n{stdout}"
        );
    }
    for sub in ["serve", "ingest", "capture", "eval", "report"] {
        let (code, stdout, _) = run(&[sub, "--help"]);
        assert_eq!(code, 0, "{sub} --help");
        assert!(stdout.contains("--help"));
    }
    // Defaults are visible in help text.
    let (_, stdout, _) = run(&["serve", "--help"]);
    assert!(stdout.contains("0.0.0.0:2222"));
    assert!(stdout.contains("default"));
}

#[test]
fn usage_errors_exit_one() {
    let (code, _, _) = run(&["bogus"]);
    assert_eq!(code, 1);
    let (code, _, stderr) = run(&["eval", "--configs", "x.json", "--out", "r.csv"]);
    assert_eq!(code, 1, "missing required --suite must be a usage error");
    assert!(stderr.contains("--suite"), "{stderr}");
    let (code, _, _) = run(&["serve", "--unknown-flag"]);
    assert_eq!(code, 1);
}

#[test]
fn runtime_failures_exit_two() {
    let (code, _, stderr) = run(&[
        "eval",
        "--profile",
        fixture("ubuntu-bash.toml").to_str().unwrap(),
        "--suite",
        "/definitely/not/here.json",
        "--configs",
        fixture("eval/configs-stub.json").to_str().unwrap(),
        "--out",
        "/tmp/never.csv",
    ]);
    assert_eq!(code, 2);
    assert!(stderr.contains("error:"), "{stderr}");

    let (code, _, _) = run(&["ingest", "--out", "/tmp/never.json"]);
    assert_eq!(code, 2, "missing profile resolves to a runtime error");
}

#[test]
fn version_exits_zero() {
    let (code, stdout, _) = run(&["--version"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("sbash"));
}

#[test]
fn ingest_eval_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store.json");
    let profile = fixture("ubuntu-bash.toml");
    let profile = profile.to_str().unwrap();

    let (code, stdout, stderr) = run(&[
        "ingest",
        "--profile",
        profile,
        "--out",
        store.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "ingest failed: {stderr}");
    assert!(stdout.contains("indexed"), "{stdout}");
    assert!(store.exists());

    let report_csv = dir.path().join("report.csv");
    let (code, _, stderr) = run(&[
        "eval",
        "--profile",
        profile,
        "--suite",
        fixture("suite/suite81.json").to_str().unwrap(),
        "--configs",
        fixture("eval/configs-stub.json").to_str().unwrap(),
        "--store",
        store.to_str().unwrap(),
        "--llm-url",
        "stub:",
        "--out",
        report_csv.to_str().unwrap(),
        "--markdown",
    ]);
    assert_eq!(code, 0, "eval failed: {stderr}");
    let csv = std::fs::read_to_string(&report_csv).unwrap();
    assert!(csv.contains("[accuracy]"));
    assert!(csv.contains("gemma-12b"));
    let md = std::fs::read_to_string(report_csv.with_extension("md")).unwrap();
    assert!(md.contains("| Metric | Model | RAG Accuracy (%)"));

    let (code, stdout, stderr) = run(&[
        "report",
        "--in",
        report_csv.to_str().unwrap(),
        "--format",
        "markdown",
    ]);
    assert_eq!(code, 0, "report failed: {stderr}");
    assert!(stdout.contains("| Metric | Model |"), "{stdout}");

    // csv re-render is byte-identical to the stored document.
    let (code, stdout, _) = run(&[
        "report",
        "--in",
        report_csv.to_str().unwrap(),
        "--format",
        "csv",
    ]);
    assert_eq!(code, 0);
    assert_eq!(stdout, csv);
}

#[test]
fn capture_subcommand_writes_a_suite() {
    let dir = tempfile::tempdir().unwrap();
    let commands = dir.path().join("cmds.tsv");
    std::fs::write(
        &commands,
        "reconnaissance\techo capture-probe\nreconnaissance\tpwd\n",
    )
    .unwrap();
    let out = dir.path().join("suite.json");
    let (code, stdout, stderr) = run(&[
        "capture",
        "--commands",
        commands.to_str().unwrap(),
        "--ref",
        "local",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{stderr}");
    assert!(stdout.contains("captured 2 cases"), "{stdout}");
    let suite: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(suite["cases"][0]["ground_truth"], "capture-probe\n");
    // The reference shell runs from its home directory.
    let home = std::env::var("HOME").unwrap_or_else(|_| "/root".into());
    assert_eq!(suite["cases"][1]["ground_truth"], format!("{home}\n"));
}

#[test]
fn env_var_resolution_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.json");
    let output = Command::new(BIN)
        .args(["-v", "ingest", "--out", out.to_str().unwrap()])
        .env("SBASH_PROFILE", fixture("ubuntu-bash.toml"))
        .env("SBASH_EMBED_URL", "mock:64")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(
        stderr.contains("flag profile") && stderr.contains("(from env)"),
        "{stderr}"
    );
    assert!(
        stderr.contains("flag embed-url = mock:64 (from env)"),
        "{stderr}"
    );
}

#[test]
fn serve_runs_sessions_and_shuts_down_cleanly_on_sigint() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("intel.jsonl");
    let mut child = Command::new(BIN)
        .args([
            "serve",
            "--profile",
            fixture("ubuntu-bash.toml").to_str().unwrap(),
            "--bind",
            "127.0.0.1:0",
            "--log",
            log.to_str().unwrap(),
            "--llm-url",
            fixture("stub/demo.json")
                .to_str()
                .map(|p| format!("stub:{p}"))
                .unwrap()
                .as_str(),
        ])
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .expect("serve starts");

    // The bound address is announced on stderr.
    let stderr = child.stderr.take().unwrap();
    let mut lines = BufReader::new(stderr).lines();
    let announce = lines.next().expect("announce line").unwrap();
    let addr = announce
        .split_whitespace()
        .find(|w| w.contains("127.0.0.1:"))
        .unwrap_or_else(|| panic!("no address in {announce:?}"))
        .to_string();

    let mut stream = TcpStream::connect(&addr).unwrap();
    stream
        .set_read_timeout(Some(Duration::from_secs(5)))
        .unwrap();
    let mut reader = stream.try_clone().unwrap();
    let mut read_until = move |marker: &str| {
        let mut out = String::new();
        let mut b = [0u8; 1];
        loop {
            match reader.read(&mut b) {
                Ok(0) => break,
                Ok(_) => {
                    out.push(b[0] as char);
                    if out.ends_with(marker) {
                        break;
                    }
                }
                Err(_) => break,
            }
        }
        out
    };
    read_until("login: ");
    stream.write_all(b"root\n").unwrap();
    read_until("Password: ");
    stream.write_all(b"x\n").unwrap();
    read_until("$ ");
    stream.write_all(b"uname -a\n").unwrap();
    let reply = read_until("$ ");
    assert!(
        reply.contains("Linux svr04"),
        "stub reply missing: {reply:?}"
    );
    stream.write_all(b"exit\n").unwrap();

    std::thread::sleep(Duration::from_millis(200));
    unsafe {
        libc::kill(child.id() as libc::pid_t, libc::SIGINT);
    }
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(0), "graceful shutdown exits 0");

    let text = std::fs::read_to_string(&log).unwrap();
    assert!(text.contains("\"session_open\""));
    assert!(text.contains("\"session_close\""));
    assert!(text.contains("uname -a"));
}
