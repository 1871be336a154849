//! Input sanitization, command classification, and the per-session
//! dispatcher that routes each line to the virtual filesystem, the
//! generation backend, or an error renderer.
//!
//! Sanitization is the prompt-injection gate: anything that does not look
//! like a shell command line (a question, free prose, an exotic head
//! token) is rejected *before* any model call and answered with the
//! profile's `command not found` syntax, so probing the shell with natural
//! language reveals nothing. Rejection is a value, not an error.
//!
//! Classification then splits surviving input three ways: **native**
//! (answered by the virtual filesystem), **ai** (known command, sent to the
//! backend), **non-existing** (unknown head, `command not found`).
//! Compound input (pipes, `&&`, redirection, substitution) always takes the
//! ai path; the filesystem never guesses at shell composition.
//!
//! Backend failures are masked as `command not found` toward the attacker
//! (an honest-looking shell error) while the true cause travels alongside
//! the response for the threat-intelligence log.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::genclient::{
    assemble_prompt, generate, postprocess, ChatBackend, GenerationConfig, Mode,
};
use crate::knowledge::{retrieve, EmbeddingProvider, Scored, VectorStore};
use crate::profile::SystemProfile;
use crate::vfs::{exec_native, native_supports, VfsState};

/// Why a line was rejected by sanitization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Empty,
    /// Head token contains characters no command name would.
    HeadNotCommandLike,
    /// Question marks or long prose with no known command token.
    NaturalLanguage,
}

/// A line that survived sanitization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SanitizedInput {
    pub head: String,
    /// Whitespace-tokenized with single/double-quote grouping.
    pub argv: Vec<String>,
    /// Unquoted shell metacharacters present (pipes, redirection, ...).
    pub compound: bool,
}

/// Sanitization outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sanitized {
    Input(SanitizedInput),
    Rejected {
        reason: RejectReason,
        /// Best-effort first token, for rendering the not-found line.
        head: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKind {
    Native,
    Ai,
    NonExisting,
    Rejected,
}

/// Classification outcome for one input line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandClass {
    pub kind: ClassKind,
    pub head: String,
    /// Tokenized command; present for Native and Ai only.
    pub argv: Option<Vec<String>>,
    /// Set when kind is Rejected.
    pub reject_reason: Option<RejectReason>,
}

fn head_is_command_like(head: &str) -> bool {
    !head.is_empty()
        && head
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '/' | '-'))
}

/// Tokenize one logical line with quote grouping, flagging unquoted shell
/// metacharacters and unquoted question marks.
fn tokenize(line: &str) -> (Vec<String>, bool, bool) {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut started = false;
    let mut compound = false;
    let mut question = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\'' | '"' => {
                started = true;
                let quote = c;
                for q in chars.by_ref() {
                    if q == quote {
                        break;
                    }
                    current.push(q);
                }
            }
            c if c.is_whitespace() => {
                if started {
                    tokens.push(core::mem::take(&mut current));
                    started = false;
                }
            }
            c => {
                if matches!(c, '|' | '&' | ';' | '<' | '>' | '(' | ')' | '`' | '$' | '*') {
                    compound = true;
                }
                if c == '?' {
                    question = true;
                }
                started = true;
                current.push(c);
            }
        }
    }
    if started {
        tokens.push(current);
    }
    (tokens, compound, question)
}

/// Stage-2 gate: tokenize and decide whether this line may proceed toward
/// command execution at all. Rejected lines never reach the backend.
pub fn sanitize(raw_line: &str, profile: &SystemProfile) -> Sanitized {
    let line = raw_line.trim();
    let raw_head = line.split_whitespace().next().unwrap_or("").to_string();
    if line.is_empty() {
        return Sanitized::Rejected {
            reason: RejectReason::Empty,
            head: raw_head,
        };
    }
    let (tokens, compound, question) = tokenize(line);
    if question {
        return Sanitized::Rejected {
            reason: RejectReason::NaturalLanguage,
            head: raw_head,
        };
    }
    let head = tokens.first().cloned().unwrap_or_default();
    if !head_is_command_like(&head) {
        return Sanitized::Rejected {
            reason: RejectReason::HeadNotCommandLike,
            head: raw_head,
        };
    }
    if tokens.len() > 6 && !tokens.iter().any(|t| profile.command_db.contains(t)) {
        return Sanitized::Rejected {
            reason: RejectReason::NaturalLanguage,
            head: raw_head,
        };
    }
    Sanitized::Input(SanitizedInput {
        head,
        argv: tokens,
        compound,
    })
}

/// Stage-3 split. Total and deterministic on sanitized input; exactly one
/// variant applies.
pub fn classify(input: &SanitizedInput, profile: &SystemProfile) -> CommandClass {
    if !profile.command_db.contains(&input.head) {
        return CommandClass {
            kind: ClassKind::NonExisting,
            head: input.head.clone(),
            argv: None,
            reject_reason: None,
        };
    }
    let native = !input.compound
        && profile.native_commands.contains(&input.head)
        && native_supports(&input.argv);
    CommandClass {
        kind: if native {
            ClassKind::Native
        } else {
            ClassKind::Ai
        },
        head: input.head.clone(),
        argv: Some(input.argv.clone()),
        reject_reason: None,
    }
}

/// One dispatched line: what the attacker sees, how long it took, how the
/// line was classified, and (for the log only) any masked backend failure.
#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub output: String,
    pub latency_ms: u64,
    pub class: CommandClass,
    pub backend_error: Option<String>,
}

/// Per-session pipeline: owns the session's filesystem state, borrows the
/// shared immutable pieces, and turns raw lines into responses.
pub struct Pipeline<'a> {
    pub profile: &'a SystemProfile,
    pub vfs: VfsState,
    pub store: Option<&'a VectorStore>,
    pub embedder: &'a dyn EmbeddingProvider,
    pub backend: &'a dyn ChatBackend,
    pub clock: &'a dyn Clock,
    pub config: GenerationConfig,
}

impl<'a> Pipeline<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        profile: &'a SystemProfile,
        vfs: VfsState,
        store: Option<&'a VectorStore>,
        embedder: &'a dyn EmbeddingProvider,
        backend: &'a dyn ChatBackend,
        clock: &'a dyn Clock,
        config: GenerationConfig,
    ) -> Self {
        Self {
            profile,
            vfs,
            store,
            embedder,
            backend,
            clock,
            config,
        }
    }

    fn not_found_line(&self, head: &str) -> String {
        let mut line = self
            .profile
            .render_error("not_found", head)
            .unwrap_or_else(|_| alloc::format!("bash: {head}: command not found"));
        line.push('\n');
        line
    }

    /// Run the full stage pipeline for one raw input line.
    pub fn dispatch(&mut self, raw_line: &str) -> Response {
        let started = self.clock.monotonic_ms();
        self.vfs.set_now(self.clock.epoch_secs());

        let (class, output, backend_error) = match sanitize(raw_line, self.profile) {
            Sanitized::Rejected { reason, head } => {
                // An empty line just yields a fresh prompt, like a real
                // shell; anything else gets the not-found syntax.
                let output = if head.is_empty() {
                    String::new()
                } else {
                    self.not_found_line(&head)
                };
                (
                    CommandClass {
                        kind: ClassKind::Rejected,
                        head,
                        argv: None,
                        reject_reason: Some(reason),
                    },
                    output,
                    None,
                )
            }
            Sanitized::Input(input) => {
                let class = classify(&input, self.profile);
                match class.kind {
                    ClassKind::Native => {
                        let result = exec_native(&mut self.vfs, self.profile, &input.argv);
                        (class, result.combined(), None)
                    }
                    ClassKind::NonExisting => {
                        let output = self.not_found_line(&class.head);
                        (class, output, None)
                    }
                    ClassKind::Ai => {
                        let command = raw_line.trim();
                        let (output, err) = self.ai_path(command, &class.head);
                        (class, output, err)
                    }
                    ClassKind::Rejected => unreachable!("classify never rejects"),
                }
            }
        };

        Response {
            output,
            latency_ms: self.clock.monotonic_ms().saturating_sub(started),
            class,
            backend_error,
        }
    }

    /// Stage 4: retrieve context (RAG mode), assemble, generate, clean up.
    /// Any failure is masked as `command not found` and reported out-of-band.
    fn ai_path(&self, command: &str, head: &str) -> (String, Option<String>) {
        let chunks: Vec<Scored> = if self.config.mode == Mode::Rag {
            match self.store {
                Some(store) => {
                    match retrieve(store, command, self.config.retrieval_k, self.embedder) {
                        Ok(hits) => hits,
                        Err(e) => {
                            return (self.not_found_line(head), Some(e.to_string()));
                        }
                    }
                }
                None => Vec::new(),
            }
        } else {
            Vec::new()
        };
        let bundle = assemble_prompt(&self.config, self.profile, command, &chunks);
        match generate(self.backend, self.clock, &bundle, &self.config) {
            Ok(result) => (postprocess(&result.text, self.profile), None),
            Err(e) => (self.not_found_line(head), Some(e.to_string())),
        }
    }
}
