//! Ground-truth capture against a real reference system.
//!
//! Each suite command runs once, non-interactively, through `bash -c` on
//! the reference: either this machine (`--ref local`) or a remote host
//! over the system `ssh` client (`--ref ssh:user@host`). The recorded
//! ground truth is stdout followed by stderr, the same transcript
//! convention the honeypot uses, with `LC_ALL=C` pinned so message syntax
//! and sort order are stable.
//!
//! Commands that outlive the per-command timeout are killed and recorded
//! with an empty ground truth and the `timed_out` flag set.
//!
//! The commands file is line-oriented: `category<TAB>command`, `#`
//! comments and blank lines ignored; categories are `reconnaissance`,
//! `post_exploitation`, and `exfiltration`.

use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use sbash_core::report::{Category, EvalCase};

use crate::rfc3339;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RefTarget {
    Local,
    Ssh(String),
}

impl RefTarget {
    pub fn parse(s: &str) -> Self {
        match s {
            "local" | "local:" => RefTarget::Local,
            other => match other.strip_prefix("ssh:") {
                Some(host) => RefTarget::Ssh(host.to_string()),
                None => RefTarget::Ssh(other.to_string()),
            },
        }
    }
}

/// Identity of the system the ground truths were captured from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMeta {
    pub host: String,
    pub os: String,
    pub hostname: String,
    pub user: String,
    pub home: String,
    pub captured_at: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CaptureError {
    #[error("cannot read commands file {path}: {source}")]
    CommandsIo {
        path: String,
        source: std::io::Error,
    },
    #[error("commands file {path} line {line}: {reason}")]
    CommandsParse {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("reference unreachable: {0}")]
    ReferenceUnreachable(String),
}

/// Parse the `category<TAB>command` file.
pub fn load_commands(path: impl AsRef<Path>) -> Result<Vec<(Category, String)>, CaptureError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CaptureError::CommandsIo {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (cat, cmd) = line
            .split_once('\t')
            .ok_or_else(|| CaptureError::CommandsParse {
                path: path.display().to_string(),
                line: idx + 1,
                reason: "expected category<TAB>command".to_string(),
            })?;
        let category = match cat {
            "reconnaissance" => Category::Reconnaissance,
            "post_exploitation" => Category::PostExploitation,
            "exfiltration" => Category::Exfiltration,
            other => {
                return Err(CaptureError::CommandsParse {
                    path: path.display().to_string(),
                    line: idx + 1,
                    reason: format!("unknown category `{other}`"),
                })
            }
        };
        out.push((category, cmd.to_string()));
    }
    Ok(out)
}

struct RunOutcome {
    stdout: Vec<u8>,
    stderr: Vec<u8>,
    timed_out: bool,
}

/// Run one command on the reference with a hard timeout.
fn run_one(
    target: &RefTarget,
    command: &str,
    timeout: Duration,
) -> Result<RunOutcome, CaptureError> {
    let mut cmd = match target {
        RefTarget::Local => {
            let mut c = Command::new("bash");
            c.arg("-c").arg(command);
            let home = std::env::var("HOME").unwrap_or_else(|_| "/root".to_string());
            let user = std::env::var("USER").unwrap_or_else(|_| "root".to_string());
            // Minimal login-shell environment: outputs must not depend on
            // whatever happens to be exported in the capturing shell.
            c.env_clear()
                .env(
                    "PATH",
                    "/usr/local/sbin:/usr/local/bin:/usr/sbin:/usr/bin:/sbin:/bin",
                )
                .env("HOME", &home)
                .env("USER", &user)
                .env("LOGNAME", &user)
                .env("SHELL", "/bin/bash")
                .env("TERM", "xterm")
                .current_dir(home);
            c
        }
        RefTarget::Ssh(host) => {
            let mut c = Command::new("ssh");
            c.arg("-o")
                .arg("BatchMode=yes")
                .arg(host)
                .arg(format!("LC_ALL=C bash -c {}", shell_quote(command)));
            c
        }
    };
    cmd.env("LC_ALL", "C")
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());

    let mut child = cmd
        .spawn()
        .map_err(|e| CaptureError::ReferenceUnreachable(format!("cannot spawn runner: {e}")))?;

    // Drain both pipes on threads so a chatty command cannot deadlock.
    let mut stdout_pipe = child.stdout.take().expect("piped");
    let mut stderr_pipe = child.stderr.take().expect("piped");
    let out_thread = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout_pipe.read_to_end(&mut buf);
        buf
    });
    let err_thread = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr_pipe.read_to_end(&mut buf);
        buf
    });

    let deadline = Instant::now() + timeout;
    let mut timed_out = false;
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) => {
                if Instant::now() >= deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    timed_out = true;
                    break None;
                }
                std::thread::sleep(Duration::from_millis(10));
            }
            Err(_) => break None,
        }
    };

    let stdout = out_thread.join().unwrap_or_default();
    let stderr = err_thread.join().unwrap_or_default();

    if let (RefTarget::Ssh(host), Some(s)) = (target, status) {
        // ssh exits 255 on connection failure, regardless of the command.
        if s.code() == Some(255) {
            return Err(CaptureError::ReferenceUnreachable(format!(
                "ssh to {host} failed: {}",
                String::from_utf8_lossy(&stderr).trim()
            )));
        }
    }

    Ok(RunOutcome {
        stdout,
        stderr,
        timed_out,
    })
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "'\\''"))
}

fn probe(target: &RefTarget, command: &str, timeout: Duration) -> String {
    run_one(target, command, timeout)
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_default()
}

/// Describe the reference system (best effort).
pub fn reference_meta(target: &RefTarget, epoch_secs: i64) -> ReferenceMeta {
    let t = Duration::from_secs(10);
    ReferenceMeta {
        host: match target {
            RefTarget::Local => "local".to_string(),
            RefTarget::Ssh(h) => format!("ssh:{h}"),
        },
        os: probe(
            target,
            ". /etc/os-release 2>/dev/null && echo \"$PRETTY_NAME\"",
            t,
        ),
        hostname: probe(target, "hostname", t),
        user: probe(target, "whoami", t),
        home: probe(target, "echo $HOME", t),
        captured_at: rfc3339(epoch_secs),
    }
}

/// Run every command on the reference and build the eval cases. The
/// transcript convention is stdout followed by stderr.
pub fn capture_ground_truth(
    commands: &[(Category, String)],
    target: &RefTarget,
    timeout: Duration,
) -> Result<Vec<EvalCase>, CaptureError> {
    // Fail fast if the reference cannot run anything at all.
    run_one(target, "true", timeout)?;

    let mut cases = Vec::with_capacity(commands.len());
    for (category, command) in commands {
        let outcome = run_one(target, command, timeout)?;
        let ground_truth = if outcome.timed_out {
            String::new()
        } else {
            let mut t = String::from_utf8_lossy(&outcome.stdout).into_owned();
            t.push_str(&String::from_utf8_lossy(&outcome.stderr));
            t
        };
        cases.push(EvalCase {
            command: command.clone(),
            ground_truth,
            category: *category,
            timed_out: outcome.timed_out,
        });
    }
    Ok(cases)
}
