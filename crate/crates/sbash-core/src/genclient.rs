//! Prompt assembly and generation against a chat-completion backend.
//!
//! Two independent switches shape every request:
//!
//! * **mode**: `Rag` prepends retrieved documentation to the user message,
//!   `NonRag` sends the bare command;
//! * **tuning**: `Tuned` sends the profile's system prompt byte-for-byte,
//!   `Untuned` sends no system message at all.
//!
//! Each command is a fresh exchange: no conversation history is sent.
//! Session state consistency is the virtual filesystem's job, which keeps
//! the context window out of the picture entirely.
//!
//! The backend itself is behind [`ChatBackend`]; the companion crate
//! provides the HTTP implementation and a scriptable stub.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::knowledge::Scored;
use crate::profile::SystemProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Rag,
    NonRag,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Rag => "rag",
            Mode::NonRag => "nonrag",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tuning {
    Tuned,
    Untuned,
}

impl Tuning {
    pub fn as_str(&self) -> &'static str {
        match self {
            Tuning::Tuned => "tuned",
            Tuning::Untuned => "untuned",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub model_name: String,
    pub mode: Mode,
    pub tuning: Tuning,
    /// Chunks retrieved per command in RAG mode.
    pub retrieval_k: usize,
    pub timeout_ms: u64,
    pub max_output_tokens: usize,
    pub backend_url: String,
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        if self.mode == Mode::Rag && self.retrieval_k == 0 {
            return Err(GenError::InvalidConfig(
                "retrieval_k must be at least 1 in rag mode".into(),
            ));
        }
        if self.timeout_ms == 0 {
            return Err(GenError::InvalidConfig("timeout must be positive".into()));
        }
        Ok(())
    }
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            model_name: "llama3.1-8b".into(),
            mode: Mode::NonRag,
            tuning: Tuning::Tuned,
            retrieval_k: 3,
            timeout_ms: 30_000,
            max_output_tokens: 512,
            backend_url: "stub:".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

/// Fully assembled request material for one command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    /// Empty in untuned mode (no system message is sent at all).
    pub system_prompt: String,
    /// Empty in non-RAG mode.
    pub context_block: String,
    pub user_message: String,
    /// Role-tagged messages derived from the fields above.
    pub messages: Vec<Message>,
}

/// Instruction wrapped around the command. The command sits alone on the
/// final line, which is also what lets scripted stubs key off it.
const USER_INSTRUCTION: &str =
    "Respond with only the raw terminal output of this command, nothing else:";

/// Deterministic template fill for one command under one configuration.
///
/// `chunks` is the retrieval result and is only consulted in RAG mode; a
/// non-RAG bundle never carries chunk text no matter what is passed.
pub fn assemble_prompt(
    config: &GenerationConfig,
    profile: &SystemProfile,
    command: &str,
    chunks: &[Scored],
) -> PromptBundle {
    let system_prompt = match config.tuning {
        Tuning::Tuned => profile.system_prompt_tuned.clone(),
        Tuning::Untuned => String::new(),
    };
    let context_block = match config.mode {
        Mode::NonRag => String::new(),
        Mode::Rag => {
            let parts: Vec<String> = chunks
                .iter()
                .map(|s| format!("[source: {}]\n{}", s.chunk.source, s.chunk.text))
                .collect();
            parts.join("\n\n")
        }
    };
    let user_message = if context_block.is_empty() {
        format!("{USER_INSTRUCTION}\n{command}")
    } else {
        format!("Reference documentation:\n\n{context_block}\n\n{USER_INSTRUCTION}\n{command}")
    };
    let mut messages = Vec::new();
    if !system_prompt.is_empty() {
        messages.push(Message {
            role: Role::System,
            content: system_prompt.clone(),
        });
    }
    messages.push(Message {
        role: Role::User,
        content: user_message.clone(),
    });
    PromptBundle {
        system_prompt,
        context_block,
        user_message,
        messages,
    }
}

/// The command a bundle was assembled for (its final user-message line).
pub fn bundle_command(bundle: &PromptBundle) -> &str {
    bundle.user_message.rsplit('\n').next().unwrap_or("")
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenError {
    #[error("backend timed out after {0} ms")]
    Timeout(u64),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
}

/// Raw reply from a chat-completion backend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendReply {
    pub text: String,
    /// Completion tokens as reported by the backend, if it reports them.
    pub token_count: Option<usize>,
}

/// A chat-completion backend. Implementations enforce `config.timeout_ms`
/// and surface transport problems as [`GenError`] values carrying the raw
/// cause for logging.
pub trait ChatBackend {
    fn complete(
        &self,
        bundle: &PromptBundle,
        config: &GenerationConfig,
    ) -> Result<BackendReply, GenError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationResult {
    pub text: String,
    pub latency_ms: u64,
    pub token_count: usize,
    pub model_name: String,
    pub mode: Mode,
    pub tuning: Tuning,
}

/// Call the backend, measure wall-clock latency around the full call, and
/// truncate the reply at `max_output_tokens` (estimated at 4 bytes/token)
/// as a local backstop on top of whatever limit the backend applied.
pub fn generate(
    backend: &dyn ChatBackend,
    clock: &dyn Clock,
    bundle: &PromptBundle,
    config: &GenerationConfig,
) -> Result<GenerationResult, GenError> {
    config.validate()?;
    let started = clock.monotonic_ms();
    let reply = backend.complete(bundle, config)?;
    let latency_ms = clock.monotonic_ms().saturating_sub(started);

    let mut text = reply.text;
    let max_bytes = config.max_output_tokens.saturating_mul(4);
    if text.len() > max_bytes {
        let mut cut = max_bytes;
        while cut > 0 && !text.is_char_boundary(cut) {
            cut -= 1;
        }
        text.truncate(cut);
    }
    let token_count = reply
        .token_count
        .unwrap_or_else(|| crate::knowledge::estimate_tokens(&text))
        .min(config.max_output_tokens);
    Ok(GenerationResult {
        text,
        latency_ms,
        token_count,
        model_name: config.model_name.clone(),
        mode: config.mode,
        tuning: config.tuning,
    })
}

/// Does `line` look like a rendered prompt from `template` (optionally
/// followed by an echoed command)? Placeholders match any non-empty text.
pub fn prompt_pattern_matches(template: &str, line: &str) -> bool {
    enum Tok<'t> {
        Lit(&'t str),
        Hole,
    }
    let mut toks = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        if let Some(close) = rest[open..].find('}') {
            if open > 0 {
                toks.push(Tok::Lit(&rest[..open]));
            }
            toks.push(Tok::Hole);
            rest = &rest[open + close + 1..];
        } else {
            break;
        }
    }
    if !rest.is_empty() {
        toks.push(Tok::Lit(rest));
    }

    let mut pos = 0usize;
    let mut pending_hole = false;
    for tok in &toks {
        match tok {
            Tok::Hole => pending_hole = true,
            Tok::Lit(lit) => {
                if pending_hole {
                    // The hole must consume at least one character.
                    let search_from = match line[pos..].chars().next() {
                        Some(c) => pos + c.len_utf8(),
                        None => return false,
                    };
                    match line[search_from..].find(lit) {
                        Some(idx) => pos = search_from + idx + lit.len(),
                        None => return false,
                    }
                    pending_hole = false;
                } else {
                    if !line[pos..].starts_with(lit) {
                        return false;
                    }
                    pos += lit.len();
                }
            }
        }
    }
    // A trailing hole consumes the rest; a trailing literal may be followed
    // by an echoed command, so any remainder is acceptable.
    true
}

/// Clean up model output: strip surrounding code fences, drop a leading
/// echoed prompt line, trim leading/trailing blank lines, and guarantee a
/// trailing newline on non-empty output. Idempotent.
pub fn postprocess(raw: &str, profile: &SystemProfile) -> String {
    let mut lines: Vec<&str> = raw.lines().collect();

    fn trim_blanks(lines: &mut Vec<&str>) {
        while lines.first().map(|s| s.trim().is_empty()).unwrap_or(false) {
            lines.remove(0);
        }
        while lines.last().map(|s| s.trim().is_empty()).unwrap_or(false) {
            lines.pop();
        }
    }

    trim_blanks(&mut lines);
    if lines.len() >= 2
        && lines
            .first()
            .map(|l| l.trim_start().starts_with("```"))
            .unwrap_or(false)
        && lines.last().map(|l| l.trim() == "```").unwrap_or(false)
    {
        lines.remove(0);
        lines.pop();
        trim_blanks(&mut lines);
    }
    if let Some(first) = lines.first() {
        if prompt_pattern_matches(&profile.prompt_template, first) {
            lines.remove(0);
            trim_blanks(&mut lines);
        }
    }

    if lines.is_empty() {
        return String::new();
    }
    let mut out = lines.join("\n");
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::FixedClock;
    use crate::knowledge::KnowledgeChunk;
    use crate::profile::samples::sample_profile;
    use crate::profile::DEFAULT_TUNED_SYSTEM_PROMPT;
    use core::cell::Cell;

    fn scored(id: &str, text: &str) -> Scored {
        Scored {
            chunk: KnowledgeChunk {
                chunk_id: id.to_string(),
                command: id.to_string(),
                text: text.to_string(),
                source: format!("kb/{id}"),
                token_estimate: 1,
            },
            score: 0.9,
        }
    }

    fn config(mode: Mode, tuning: Tuning) -> GenerationConfig {
        GenerationConfig {
            mode,
            tuning,
            ..GenerationConfig::default()
        }
    }

    #[test]
    fn nonrag_tuned_bundle_shape() {
        let profile = sample_profile();
        let bundle = assemble_prompt(
            &config(Mode::NonRag, Tuning::Tuned),
            &profile,
            "uname -a",
            &[],
        );
        assert_eq!(bundle.system_prompt, DEFAULT_TUNED_SYSTEM_PROMPT);
        assert_eq!(bundle.context_block, "");
        assert_eq!(bundle.messages.len(), 2);
        assert_eq!(bundle.messages[0].role, Role::System);
        assert_eq!(bundle.messages[0].content, DEFAULT_TUNED_SYSTEM_PROMPT);
        assert_eq!(bundle.messages[1].role, Role::User);
        assert_eq!(bundle_command(&bundle), "uname -a");
    }

    #[test]
    fn rag_untuned_bundle_carries_chunks_before_command() {
        let profile = sample_profile();
        let chunks = [
            scored("uname", "print system information"),
            scored("id", "print user identity"),
        ];
        let bundle = assemble_prompt(
            &config(Mode::Rag, Tuning::Untuned),
            &profile,
            "uname -a",
            &chunks,
        );
        assert_eq!(bundle.system_prompt, "");
        assert_eq!(bundle.messages.len(), 1, "untuned sends no system message");
        assert_eq!(bundle.messages[0].role, Role::User);
        let user = &bundle.user_message;
        let a = user.find("print system information").unwrap();
        let b = user.find("print user identity").unwrap();
        let c = user.rfind("uname -a").unwrap();
        assert!(a < c && b < c, "chunks precede the command");
        assert_eq!(bundle_command(&bundle), "uname -a");
    }

    #[test]
    fn nonrag_bundle_never_contains_chunk_text() {
        let profile = sample_profile();
        let chunks = [scored("ls", "SECRET-CHUNK-MARKER")];
        for tuning in [Tuning::Tuned, Tuning::Untuned] {
            let bundle = assemble_prompt(&config(Mode::NonRag, tuning), &profile, "ls -x", &chunks);
            assert_eq!(bundle.context_block, "");
            assert!(!bundle.user_message.contains("SECRET-CHUNK-MARKER"));
        }
    }

    #[test]
    fn four_mode_matrix_is_structurally_distinct() {
        let profile = sample_profile();
        let chunks = [scored("ls", "list files docs")];
        let mut seen = alloc::vec::Vec::new();
        for mode in [Mode::Rag, Mode::NonRag] {
            for tuning in [Tuning::Tuned, Tuning::Untuned] {
                let b = assemble_prompt(&config(mode, tuning), &profile, "ls", &chunks);
                match tuning {
                    Tuning::Tuned => {
                        assert_eq!(b.system_prompt, profile.system_prompt_tuned);
                        assert_eq!(b.messages[0].role, Role::System);
                    }
                    Tuning::Untuned => {
                        assert!(b.system_prompt.is_empty());
                        assert!(b.messages.iter().all(|m| m.role != Role::System));
                    }
                }
                match mode {
                    Mode::Rag => assert!(!b.context_block.is_empty()),
                    Mode::NonRag => assert!(b.context_block.is_empty()),
                }
                seen.push(b);
            }
        }
        for i in 0..seen.len() {
            for j in i + 1..seen.len() {
                assert_ne!(seen[i], seen[j], "bundles {i} and {j} identical");
            }
        }
    }

    struct FakeBackend<'c> {
        reply: &'static str,
        clock: &'c FixedClock,
        delay_ms: u64,
        calls: Cell<usize>,
    }

    impl ChatBackend for FakeBackend<'_> {
        fn complete(
            &self,
            _bundle: &PromptBundle,
            _config: &GenerationConfig,
        ) -> Result<BackendReply, GenError> {
            self.calls.set(self.calls.get() + 1);
            self.clock.advance_ms(self.delay_ms);
            Ok(BackendReply {
                text: self.reply.to_string(),
                token_count: None,
            })
        }
    }

    #[test]
    fn generate_passes_through_and_measures_latency() {
        let profile = sample_profile();
        let clock = FixedClock::new(5_000, 1_786_000_000);
        let backend = FakeBackend {
            reply: "Linux svr04 5.15.0-91-generic x86_64 GNU/Linux",
            clock: &clock,
            delay_ms: 42,
            calls: Cell::new(0),
        };
        let cfg = config(Mode::NonRag, Tuning::Tuned);
        let bundle = assemble_prompt(&cfg, &profile, "uname -a", &[]);
        let result = generate(&backend, &clock, &bundle, &cfg).unwrap();
        assert_eq!(
            result.text,
            "Linux svr04 5.15.0-91-generic x86_64 GNU/Linux"
        );
        assert_eq!(result.latency_ms, 42);
        assert_eq!(backend.calls.get(), 1);
        assert_eq!(result.model_name, cfg.model_name);
    }

    #[test]
    fn generate_truncates_at_max_output_tokens() {
        let profile = sample_profile();
        let clock = FixedClock::new(0, 0);
        let backend = FakeBackend {
            reply: "this reply is much longer than the configured output budget allows",
            clock: &clock,
            delay_ms: 1,
            calls: Cell::new(0),
        };
        let mut cfg = config(Mode::NonRag, Tuning::Untuned);
        cfg.max_output_tokens = 4;
        let bundle = assemble_prompt(&cfg, &profile, "x", &[]);
        let result = generate(&backend, &clock, &bundle, &cfg).unwrap();
        assert_eq!(result.text.len(), 16);
        assert_eq!(result.token_count, 4);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = config(Mode::Rag, Tuning::Tuned);
        cfg.retrieval_k = 0;
        assert!(matches!(cfg.validate(), Err(GenError::InvalidConfig(_))));
        let mut cfg = config(Mode::NonRag, Tuning::Tuned);
        cfg.timeout_ms = 0;
        assert!(matches!(cfg.validate(), Err(GenError::InvalidConfig(_))));
    }

    #[test]
    fn postprocess_strips_fences_and_guarantees_newline() {
        let p = sample_profile();
        assert_eq!(postprocess("```\nfile1 file2\n```", &p), "file1 file2\n");
        assert_eq!(
            postprocess("```bash\nfile1 file2\n```", &p),
            "file1 file2\n"
        );
        assert_eq!(postprocess("file1 file2", &p), "file1 file2\n");
        assert_eq!(postprocess("\n\nout\n\n\n", &p), "out\n");
        assert_eq!(postprocess("", &p), "");
        assert_eq!(postprocess("\n  \n", &p), "");
    }

    #[test]
    fn postprocess_drops_leading_echoed_prompt() {
        let p = sample_profile();
        assert_eq!(postprocess("user@svr04:~$ ls\nfile1\n", &p), "file1\n");
        assert_eq!(
            postprocess("root@host:/tmp$ uname -a\nLinux\n", &p),
            "Linux\n"
        );
        // A line that merely contains an @ is not a prompt.
        assert_eq!(
            postprocess("admin@svr04 is logged in\nok\n", &p),
            "admin@svr04 is logged in\nok\n"
        );
    }

    #[test]
    fn postprocess_is_idempotent() {
        let p = sample_profile();
        let samples = [
            "```\nfile1 file2\n```",
            "user@svr04:~$ ls\nfile1\n",
            "plain output",
            "",
            "multi\nline\noutput\n",
            "\n\n```bash\nroot@svr04:~$ id\nuid=0\n```\n\n",
        ];
        for s in samples {
            let once = postprocess(s, &p);
            let twice = postprocess(&once, &p);
            assert_eq!(once, twice, "not idempotent on {s:?}");
        }
    }

    proptest::proptest! {
        #[test]
        fn postprocess_idempotent_on_arbitrary_text(raw in proptest::prelude::any::<String>()) {
            let p = sample_profile();
            let once = postprocess(&raw, &p);
            proptest::prop_assert_eq!(postprocess(&once, &p), once);
        }
    }

    #[test]
    fn prompt_matcher_against_fixture_template() {
        let p = sample_profile();
        let t = &p.prompt_template;
        assert!(prompt_pattern_matches(t, "root@svr04:~$ "));
        assert!(prompt_pattern_matches(t, "root@svr04:~$ ls -la"));
        assert!(prompt_pattern_matches(t, "a@b:/x$ whoami"));
        assert!(!prompt_pattern_matches(t, "file1 file2"));
        assert!(!prompt_pattern_matches(t, "root@svr04 no colon"));
        assert!(!prompt_pattern_matches(t, "@host:~$ missing user"));
    }
}
