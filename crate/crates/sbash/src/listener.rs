//! Network-facing session service.
//!
//! Plain TCP, line-oriented (telnet-style): any username and password are
//! accepted, then each input line runs through the dispatch pipeline and
//! the output comes back followed by a freshly rendered prompt. Every
//! connection gets its own thread and its own mutated copy of the template
//! filesystem, so sessions cannot observe each other. The only shared
//! mutable resource is the JSONL log sink, which serializes appends
//! internally.
//!
//! The session loop is transport-agnostic (anything `Read + Write`); an
//! SSH transport can wrap the same loop behind a shell channel, but this
//! build ships TCP only and `Transport::Ssh` reports that at startup
//! rather than pretending.
//!
//! Raw terminal escape sequences are stripped from input before dispatch;
//! line editing is not interpreted, it just never corrupts a session.

use std::io::{ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use sbash_core::clock::Clock;
use sbash_core::dispatch::{ClassKind, Pipeline};
use sbash_core::genclient::{ChatBackend, GenerationConfig};
use sbash_core::knowledge::{EmbeddingProvider, VectorStore};
use sbash_core::profile::SystemProfile;
use sbash_core::vfs::{mutate, VfsState};

use crate::jsonlog::{LogRecord, LogSink};
use crate::{rfc3339, SystemClock};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    Tcp,
    Ssh,
}

impl std::str::FromStr for Transport {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tcp" => Ok(Transport::Tcp),
            "ssh" => Ok(Transport::Ssh),
            other => Err(format!("unknown transport `{other}` (expected tcp or ssh)")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ListenError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
    #[error("the ssh transport is not compiled into this build; use --transport tcp")]
    SshNotBuilt,
}

/// Everything a session needs, shared immutably across connections.
pub struct Shared {
    pub profile: SystemProfile,
    pub template_vfs: VfsState,
    pub store: Option<VectorStore>,
    pub backend: Box<dyn ChatBackend + Send + Sync>,
    pub embedder: Box<dyn EmbeddingProvider + Send + Sync>,
    pub gen_config: GenerationConfig,
    pub sink: LogSink,
    pub clock: SystemClock,
}

/// Running server handle. Dropping it does not stop the server; call
/// [`ServerHandle::shutdown_and_wait`] (or set the flag from a signal
/// handler and [`ServerHandle::wait`]).
pub struct ServerHandle {
    local_addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    accept_thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn shutdown_flag(&self) -> Arc<AtomicBool> {
        self.shutdown.clone()
    }

    pub fn shutdown_and_wait(mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }

    pub fn wait(mut self) {
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

/// Bind and start accepting. Returns immediately; sessions run on their
/// own threads until the shutdown flag is set.
pub fn serve(
    bind: &str,
    transport: Transport,
    shared: Arc<Shared>,
) -> Result<ServerHandle, ListenError> {
    if transport == Transport::Ssh {
        return Err(ListenError::SshNotBuilt);
    }
    let listener = TcpListener::bind(bind).map_err(|source| ListenError::Bind {
        addr: bind.to_string(),
        source,
    })?;
    let local_addr = listener.local_addr().map_err(|source| ListenError::Bind {
        addr: bind.to_string(),
        source,
    })?;
    listener
        .set_nonblocking(true)
        .map_err(|source| ListenError::Bind {
            addr: bind.to_string(),
            source,
        })?;

    let shutdown = Arc::new(AtomicBool::new(false));
    let accept_shutdown = shutdown.clone();
    let session_counter = Arc::new(AtomicU64::new(0));

    let accept_thread = std::thread::spawn(move || {
        let sessions: Arc<Mutex<Vec<JoinHandle<()>>>> = Arc::new(Mutex::new(Vec::new()));
        while !accept_shutdown.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, peer)) => {
                    let shared = shared.clone();
                    let shutdown = accept_shutdown.clone();
                    let id = session_counter.fetch_add(1, Ordering::SeqCst) + 1;
                    let handle = std::thread::spawn(move || {
                        run_session(stream, peer, id, shared, shutdown);
                    });
                    sessions.lock().expect("session list").push(handle);
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => {
                    std::thread::sleep(Duration::from_millis(20));
                }
                Err(_) => std::thread::sleep(Duration::from_millis(20)),
            }
        }
        // Graceful shutdown: sessions watch the same flag and exit at
        // their next read timeout; join them all so records are flushed.
        let handles: Vec<JoinHandle<()>> =
            std::mem::take(&mut *sessions.lock().expect("session list"));
        for h in handles {
            let _ = h.join();
        }
    });

    Ok(ServerHandle {
        local_addr,
        shutdown,
        accept_thread: Some(accept_thread),
    })
}

/// Longest accepted input line; a peer streaming bytes without a newline
/// gets its buffer cut here instead of growing it without bound.
const MAX_LINE_BYTES: usize = 64 * 1024;

/// Read one line (without the newline) honoring the shutdown flag.
/// `Ok(None)` means the peer disconnected or the server is shutting down.
fn read_line(
    stream: &mut TcpStream,
    pending: &mut Vec<u8>,
    shutdown: &AtomicBool,
) -> std::io::Result<Option<String>> {
    loop {
        if let Some(pos) = pending.iter().position(|&b| b == b'\n') {
            let line: Vec<u8> = pending.drain(..=pos).collect();
            return Ok(Some(decode_line(&line[..line.len() - 1])));
        }
        if pending.len() >= MAX_LINE_BYTES {
            let line = std::mem::take(pending);
            return Ok(Some(decode_line(&line)));
        }
        if shutdown.load(Ordering::SeqCst) {
            return Ok(None);
        }
        let mut buf = [0u8; 1024];
        match stream.read(&mut buf) {
            Ok(0) => return Ok(None),
            Ok(n) => pending.extend_from_slice(&buf[..n]),
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => continue,
            Err(e) => return Err(e),
        }
    }
}

/// Decode raw input bytes: UTF-8 (lossy), ANSI/CSI escape sequences and
/// control characters stripped, carriage returns dropped.
fn decode_line(bytes: &[u8]) -> String {
    let text = String::from_utf8_lossy(bytes);
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\u{1b}' {
            // CSI: ESC [ ... final byte in @..~; otherwise ESC + one char.
            if chars.peek() == Some(&'[') {
                chars.next();
                for f in chars.by_ref() {
                    if ('\u{40}'..='\u{7e}').contains(&f) {
                        break;
                    }
                }
            } else {
                chars.next();
            }
            continue;
        }
        if c == '\r' || (c.is_control() && c != '\t') {
            continue;
        }
        out.push(c);
    }
    out
}

fn run_session(
    mut stream: TcpStream,
    peer: SocketAddr,
    id: u64,
    shared: Arc<Shared>,
    shutdown: Arc<AtomicBool>,
) {
    let _ = stream.set_read_timeout(Some(Duration::from_millis(100)));
    let _ = stream.set_nodelay(true);
    let session_id = format!("s{id:06}");
    let start_time = rfc3339(shared.clock.epoch_secs());
    let mut pending = Vec::new();

    // Login: any identity is accepted; the password is read and discarded.
    let login = (|| -> std::io::Result<Option<String>> {
        stream.write_all(b"login: ")?;
        let Some(username) = read_line(&mut stream, &mut pending, &shutdown)? else {
            return Ok(None);
        };
        stream.write_all(b"Password: ")?;
        let Some(_password) = read_line(&mut stream, &mut pending, &shutdown)? else {
            return Ok(None);
        };
        Ok(Some(username))
    })();

    let username = match login {
        Ok(Some(name)) if !name.trim().is_empty() => name.trim().to_string(),
        Ok(Some(_)) => shared.profile.default_user.clone(),
        _ => return, // disconnected before authenticating; nothing to log
    };

    shared.sink.append(&LogRecord::SessionOpen {
        session_id: session_id.clone(),
        peer_address: peer.to_string(),
        start_time: start_time.clone(),
        username: username.clone(),
        profile_id: shared.profile.system_id.clone(),
    });

    // Fresh, per-session filesystem: template plus seeded mutation.
    let identity = shared.profile.shell_identity(&username).clone();
    let mut vfs = shared.template_vfs.clone();
    mutate(&mut vfs, shared.profile.mutation_seed.wrapping_add(id));
    vfs.session_user = identity.username.clone();
    let _ = sbash_core::vfs::exec_native(
        &mut vfs,
        &shared.profile,
        &["cd".to_string(), identity.home.clone()],
    );

    let mut pipeline = Pipeline::new(
        &shared.profile,
        vfs,
        shared.store.as_ref(),
        shared.embedder.as_ref(),
        shared.backend.as_ref(),
        &shared.clock,
        shared.gen_config.clone(),
    );

    let mut seq: u64 = 0;
    let session_loop = (|| -> std::io::Result<()> {
        stream.write_all(shared.profile.login_banner.as_bytes())?;
        loop {
            let prompt = shared
                .profile
                .render_prompt_line(&identity.username, pipeline.vfs.cwd())
                .unwrap_or_else(|_| "$ ".to_string());
            stream.write_all(prompt.as_bytes())?;
            stream.flush()?;

            let Some(line) = read_line(&mut stream, &mut pending, &shutdown)? else {
                return Ok(());
            };
            let trimmed = line.trim();
            if trimmed == "exit" || trimmed == "logout" {
                seq += 1;
                shared.sink.append(&LogRecord::Command {
                    session_id: session_id.clone(),
                    seq,
                    timestamp: rfc3339(shared.clock.epoch_secs()),
                    raw_input: line.clone(),
                    class: ClassKind::Native,
                    output: "logout\n".to_string(),
                    latency_ms: 0,
                    backend_error: None,
                });
                let _ = stream.write_all(b"logout\n");
                return Ok(());
            }

            let response = pipeline.dispatch(&line);
            seq += 1;
            shared.sink.append(&LogRecord::Command {
                session_id: session_id.clone(),
                seq,
                timestamp: rfc3339(shared.clock.epoch_secs()),
                raw_input: line.clone(),
                class: response.class.kind,
                output: response.output.clone(),
                latency_ms: response.latency_ms,
                backend_error: response.backend_error.clone(),
            });
            stream.write_all(response.output.as_bytes())?;
        }
    })();
    let _ = session_loop;

    shared.sink.append(&LogRecord::SessionClose {
        session_id,
        peer_address: peer.to_string(),
        start_time,
        end_time: rfc3339(shared.clock.epoch_secs()),
        username,
        profile_id: shared.profile.system_id.clone(),
    });
}
