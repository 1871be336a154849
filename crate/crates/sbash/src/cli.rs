//! Command-line surface: `serve`, `ingest`, `capture`, `eval`, `report`.
//!
//! Flag resolution order is CLI > environment > built-in default, and at
//! `-v` every resolved flag prints its source. Environment variables:
//! `SBASH_PROFILE`, `SBASH_LLM_URL`, `SBASH_EMBED_URL`.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use sbash_core::clock::Clock;
use sbash_core::genclient::{GenerationConfig, Mode, Tuning};
use sbash_core::report::{parse_csv, render_csv, render_markdown, run_suite};

use crate::backend::{backend_from_url, embedder_from_url};
use crate::capture::{capture_ground_truth, load_commands, reference_meta, RefTarget};
use crate::evalrun::{
    load_configs, load_suite, minimal_vfs, save_suite, RoutingBackend, SuiteFile,
};
use crate::jsonlog::LogSink;
use crate::listener::{serve, Shared, Transport};
use crate::profilefs::{build_vfs, load_profile};
use crate::storefs::{build_store, load_store, save_store, DEFAULT_CHUNK_SIZE, DEFAULT_OVERLAP};
use crate::SystemClock;

#[derive(Debug, Parser)]
#[command(
    name = "sbash",
    version,
    about = "Configurable shell honeypot with a native virtual filesystem, an LLM/RAG answer path, and an evaluation harness"
)]
pub struct Cli {
    /// Print flag resolution and progress detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Args)]
pub struct ProfileArg {
    /// Profile document (TOML). Falls back to $SBASH_PROFILE.
    #[arg(long)]
    pub profile: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Run the network-facing honeypot.
    Serve {
        #[command(flatten)]
        profile: ProfileArg,
        /// Listen address.
        #[arg(long, default_value = "0.0.0.0:2222")]
        bind: String,
        /// Session transport (this build ships tcp; ssh reports unbuilt).
        #[arg(long, default_value = "tcp")]
        transport: Transport,
        /// Threat-intelligence JSONL sink; omitted = discard.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Chat backend: http(s) endpoint or stub:[fixture.json].
        #[arg(long)]
        llm_url: Option<String>,
        /// Embedding provider: http(s) endpoint or mock:[dim].
        #[arg(long)]
        embed_url: Option<String>,
        /// Model name sent to the backend.
        #[arg(long, default_value = "llama3.1-8b")]
        model: String,
        /// rag | nonrag.
        #[arg(long, default_value = "nonrag")]
        mode: String,
        /// tuned | untuned.
        #[arg(long, default_value = "tuned")]
        tuning: String,
        /// Serialized vector store; defaults to indexing kb_source_dir at
        /// startup when mode is rag.
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        retrieval_k: usize,
        #[arg(long, default_value_t = 30_000)]
        timeout_ms: u64,
        #[arg(long, default_value_t = 512)]
        max_output_tokens: usize,
    },
    /// Build the knowledge-base vector store from the profile's source dir.
    Ingest {
        #[command(flatten)]
        profile: ProfileArg,
        /// Output store file (JSON).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        embed_url: Option<String>,
        #[arg(long, default_value_t = DEFAULT_CHUNK_SIZE)]
        chunk_size: usize,
        #[arg(long, default_value_t = DEFAULT_OVERLAP)]
        overlap: usize,
    },
    /// Capture ground-truth outputs from a reference system.
    Capture {
        /// Commands file: category<TAB>command per line.
        #[arg(long)]
        commands: PathBuf,
        /// Reference: `local` or `ssh:user@host`.
        #[arg(long = "ref", value_name = "REF")]
        reference: String,
        /// Output suite file (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Per-command timeout.
        #[arg(long, default_value_t = 10_000)]
        timeout_ms: u64,
    },
    /// Run the accuracy/latency evaluation over a suite and config matrix.
    Eval {
        #[command(flatten)]
        profile: ProfileArg,
        /// Suite file from `capture`.
        #[arg(long)]
        suite: PathBuf,
        /// Config matrix (JSON).
        #[arg(long)]
        configs: PathBuf,
        /// Report CSV output path.
        #[arg(long)]
        out: PathBuf,
        /// Also write the markdown rendering next to the CSV.
        #[arg(long)]
        markdown: bool,
        /// Override every config's backend URL.
        #[arg(long)]
        llm_url: Option<String>,
        #[arg(long)]
        embed_url: Option<String>,
        /// Vector store for rag configs; defaults to indexing
        /// kb_source_dir when any config needs it.
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Re-render a stored report.
    Report {
        /// Report CSV produced by `eval`.
        #[arg(long = "in", value_name = "IN")]
        input: PathBuf,
        /// csv | markdown.
        #[arg(long, default_value = "markdown")]
        format: String,
        /// Output path; omitted = stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct CliError(pub String);

impl CliError {
    fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

fn fail(e: impl std::fmt::Display) -> CliError {
    CliError::new(e.to_string())
}

/// Resolve a flag through CLI > environment > default, reporting the
/// winning source.
fn resolve(cli: Option<String>, env_var: &str, default: &str) -> (String, &'static str) {
    if let Some(v) = cli {
        return (v, "cli");
    }
    if let Ok(v) = std::env::var(env_var) {
        if !v.is_empty() {
            return (v, "env");
        }
    }
    (default.to_string(), "default")
}

fn resolve_profile_path(arg: &ProfileArg, verbose: u8) -> Result<PathBuf, CliError> {
    let (value, source) = resolve(
        arg.profile
            .as_ref()
            .map(|p| p.to_string_lossy().into_owned()),
        "SBASH_PROFILE",
        "",
    );
    if value.is_empty() {
        return Err(CliError::new(
            "missing --profile (or $SBASH_PROFILE)".to_string(),
        ));
    }
    log_resolution(verbose, "profile", &value, source);
    Ok(PathBuf::from(value))
}

fn log_resolution(verbose: u8, flag: &str, value: &str, source: &str) {
    if verbose > 0 {
        eprintln!("flag {flag} = {value} (from {source})");
    }
}

fn parse_mode(s: &str) -> Result<Mode, CliError> {
    match s {
        "rag" => Ok(Mode::Rag),
        "nonrag" => Ok(Mode::NonRag),
        other => Err(CliError::new(format!(
            "unknown mode `{other}` (expected rag or nonrag)"
        ))),
    }
}

fn parse_tuning(s: &str) -> Result<Tuning, CliError> {
    match s {
        "tuned" => Ok(Tuning::Tuned),
        "untuned" => Ok(Tuning::Untuned),
        other => Err(CliError::new(format!(
            "unknown tuning `{other}` (expected tuned or untuned)"
        ))),
    }
}

static INTERRUPTED: AtomicBool = AtomicBool::new(false);

extern "C" fn on_interrupt(_sig: libc::c_int) {
    INTERRUPTED.store(true, Ordering::SeqCst);
}

fn install_interrupt_handler() {
    let handler = on_interrupt as extern "C" fn(libc::c_int) as usize as libc::sighandler_t;
    unsafe {
        libc::signal(libc::SIGINT, handler);
        libc::signal(libc::SIGTERM, handler);
    }
}

/// Execute a parsed invocation. Errors map to exit code 2.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let verbose = cli.verbose;
    match cli.command {
        Cmd::Serve {
            profile,
            bind,
            transport,
            log,
            llm_url,
            embed_url,
            model,
            mode,
            tuning,
            store,
            retrieval_k,
            timeout_ms,
            max_output_tokens,
        } => {
            let profile_path = resolve_profile_path(&profile, verbose)?;
            let profile = load_profile(&profile_path).map_err(fail)?;
            let (llm_url, s1) = resolve(llm_url, "SBASH_LLM_URL", "stub:");
            log_resolution(verbose, "llm-url", &llm_url, s1);
            let (embed_url, s2) = resolve(embed_url, "SBASH_EMBED_URL", "mock:");
            log_resolution(verbose, "embed-url", &embed_url, s2);
            let mode = parse_mode(&mode)?;
            let tuning = parse_tuning(&tuning)?;

            let template_vfs = build_vfs(&profile).map_err(CliError::new)?;
            let embedder = embedder_from_url(&embed_url).map_err(fail)?;
            let backend = backend_from_url(&llm_url).map_err(fail)?;

            let store = match (&store, mode) {
                (Some(path), _) => Some(load_store(path).map_err(fail)?),
                (None, Mode::Rag) => {
                    if profile.kb_source_dir.is_empty() {
                        return Err(CliError::new(
                            "rag mode needs --store or a profile kb_source_dir",
                        ));
                    }
                    Some(
                        build_store(
                            &profile.kb_source_dir,
                            DEFAULT_CHUNK_SIZE,
                            DEFAULT_OVERLAP,
                            embedder.as_ref(),
                        )
                        .map_err(fail)?,
                    )
                }
                (None, Mode::NonRag) => None,
            };

            let sink = match &log {
                Some(path) => LogSink::to_path(path).map_err(fail)?,
                None => LogSink::discard(),
            };

            let gen_config = GenerationConfig {
                model_name: model,
                mode,
                tuning,
                retrieval_k,
                timeout_ms,
                max_output_tokens,
                backend_url: llm_url.clone(),
            };
            gen_config.validate().map_err(fail)?;

            let shared = Arc::new(Shared {
                profile,
                template_vfs,
                store,
                backend,
                embedder,
                gen_config,
                sink,
                clock: SystemClock::new(),
            });

            install_interrupt_handler();
            let handle = serve(&bind, transport, shared).map_err(fail)?;
            eprintln!("listening on {} ({:?})", handle.local_addr(), transport);
            let flag = handle.shutdown_flag();
            while !INTERRUPTED.load(Ordering::SeqCst) {
                std::thread::sleep(Duration::from_millis(50));
            }
            eprintln!("shutting down");
            flag.store(true, Ordering::SeqCst);
            handle.wait();
            Ok(())
        }

        Cmd::Ingest {
            profile,
            out,
            embed_url,
            chunk_size,
            overlap,
        } => {
            let profile_path = resolve_profile_path(&profile, verbose)?;
            let profile = load_profile(&profile_path).map_err(fail)?;
            let (embed_url, src) = resolve(embed_url, "SBASH_EMBED_URL", "mock:");
            log_resolution(verbose, "embed-url", &embed_url, src);
            if profile.kb_source_dir.is_empty() {
                return Err(CliError::new("profile has no kb_source_dir"));
            }
            let embedder = embedder_from_url(&embed_url).map_err(fail)?;
            let store = build_store(
                &profile.kb_source_dir,
                chunk_size,
                overlap,
                embedder.as_ref(),
            )
            .map_err(fail)?;
            save_store(&out, &store).map_err(fail)?;
            println!(
                "indexed {} chunks (dim {}) -> {}",
                store.len(),
                store.dim(),
                out.display()
            );
            Ok(())
        }

        Cmd::Capture {
            commands,
            reference,
            out,
            timeout_ms,
        } => {
            let commands = load_commands(&commands).map_err(fail)?;
            let target = RefTarget::parse(&reference);
            let clock = SystemClock::new();
            let timeout = Duration::from_millis(timeout_ms);
            let cases = capture_ground_truth(&commands, &target, timeout).map_err(fail)?;
            let timed_out = cases.iter().filter(|c| c.timed_out).count();
            let empty = cases.iter().filter(|c| c.ground_truth.is_empty()).count();
            let suite = SuiteFile {
                version: crate::evalrun::SUITE_VERSION,
                reference: reference_meta(&target, clock.epoch_secs()),
                cases,
            };
            save_suite(&out, &suite).map_err(fail)?;
            println!(
                "captured {} cases ({timed_out} timed out, {empty} empty) -> {}",
                suite.cases.len(),
                out.display()
            );
            Ok(())
        }

        Cmd::Eval {
            profile,
            suite,
            configs,
            out,
            markdown,
            llm_url,
            embed_url,
            store,
        } => {
            let profile_path = resolve_profile_path(&profile, verbose)?;
            let profile = load_profile(&profile_path).map_err(fail)?;
            let (embed_url, src) = resolve(embed_url, "SBASH_EMBED_URL", "mock:");
            log_resolution(verbose, "embed-url", &embed_url, src);
            let (fallback_llm, src) = resolve(None, "SBASH_LLM_URL", "stub:");
            log_resolution(verbose, "llm-url fallback", &fallback_llm, src);

            let suite = load_suite(&suite).map_err(fail)?;
            let configs =
                load_configs(&configs, llm_url.as_deref(), &fallback_llm).map_err(fail)?;
            let embedder = embedder_from_url(&embed_url).map_err(fail)?;
            let backend = RoutingBackend::for_configs(&configs).map_err(fail)?;

            let base_vfs = if profile.fs_template.is_empty() {
                minimal_vfs(&profile)
            } else {
                build_vfs(&profile).map_err(CliError::new)?
            };

            let needs_store = configs.iter().any(|c| c.mode == Mode::Rag);
            let store = match (&store, needs_store) {
                (Some(path), _) => Some(load_store(path).map_err(fail)?),
                (None, true) if !profile.kb_source_dir.is_empty() => Some(
                    build_store(
                        &profile.kb_source_dir,
                        DEFAULT_CHUNK_SIZE,
                        DEFAULT_OVERLAP,
                        embedder.as_ref(),
                    )
                    .map_err(fail)?,
                ),
                _ => None,
            };

            let clock = SystemClock::new();
            let report = run_suite(
                &suite.cases,
                &configs,
                &profile,
                &base_vfs,
                store.as_ref(),
                embedder.as_ref(),
                &backend,
                &clock,
            )
            .map_err(fail)?;

            std::fs::write(&out, render_csv(&report))
                .map_err(|e| CliError::new(format!("cannot write {}: {e}", out.display())))?;
            println!("report -> {}", out.display());
            if markdown {
                let md_path = out.with_extension("md");
                std::fs::write(&md_path, render_markdown(&report)).map_err(|e| {
                    CliError::new(format!("cannot write {}: {e}", md_path.display()))
                })?;
                println!("markdown -> {}", md_path.display());
            }
            Ok(())
        }

        Cmd::Report { input, format, out } => {
            let text = std::fs::read_to_string(&input)
                .map_err(|e| CliError::new(format!("cannot read {}: {e}", input.display())))?;
            let report = parse_csv(&text).map_err(fail)?;
            let rendered = match format.as_str() {
                "markdown" => render_markdown(&report),
                "csv" => render_csv(&report),
                other => {
                    return Err(CliError::new(format!(
                        "unknown format `{other}` (expected csv or markdown)"
                    )))
                }
            };
            match out {
                Some(path) => std::fs::write(&path, rendered)
                    .map_err(|e| CliError::new(format!("cannot write {}: {e}", path.display())))?,
                None => print!("{rendered}"),
            }
            Ok(())
        }
    }
}

/// Expose the parser for CLI-surface tests.
pub fn try_parse_from<I, T>(args: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Cli::try_parse_from(args)
}
