//! Evaluation runner: file schemas for suites and config matrices, backend
//! routing, and the glue that feeds everything into the core suite runner.
//!
//! **Suite file** (JSON): `{"version": 1, "reference": {...}, "cases":
//! [{"command", "ground_truth", "category", "timed_out"}...]}`, produced
//! by `sbash capture`, consumed by `sbash eval`.
//!
//! **Configs file** (JSON): `{"configs": [{"model", "mode": "rag"|"nonrag",
//! "tuning": "tuned"|"untuned", "retrieval_k"?, "timeout_ms"?,
//! "max_output_tokens"?, "backend_url"?}...]}`. Omitted fields take the
//! documented defaults; a missing `backend_url` falls back to the
//! runner-level URL (`--llm-url`).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use sbash_core::genclient::{
    BackendReply, ChatBackend, GenError, GenerationConfig, Mode, PromptBundle, Tuning,
};
use sbash_core::report::EvalCase;

use crate::backend::{backend_from_url, BackendInitError};
use crate::capture::ReferenceMeta;

pub const SUITE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteFile {
    pub version: u32,
    #[serde(default)]
    pub reference: ReferenceMeta,
    pub cases: Vec<EvalCase>,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalFsError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("suite {path} has unsupported version {version}")]
    Version { path: String, version: u32 },
    #[error(transparent)]
    Backend(#[from] BackendInitError),
}

pub fn load_suite(path: impl AsRef<Path>) -> Result<SuiteFile, EvalFsError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| EvalFsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let suite: SuiteFile = serde_json::from_str(&text).map_err(|source| EvalFsError::Parse {
        path: path.display().to_string(),
        source,
    })?;
    if suite.version != SUITE_VERSION {
        return Err(EvalFsError::Version {
            path: path.display().to_string(),
            version: suite.version,
        });
    }
    Ok(suite)
}

pub fn save_suite(path: impl AsRef<Path>, suite: &SuiteFile) -> Result<(), EvalFsError> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(suite).expect("suite serializes");
    std::fs::write(path, json).map_err(|source| EvalFsError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn default_retrieval_k() -> usize {
    3
}
fn default_timeout_ms() -> u64 {
    30_000
}
fn default_max_output_tokens() -> usize {
    512
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigEntry {
    pub model: String,
    pub mode: Mode,
    pub tuning: Tuning,
    #[serde(default = "default_retrieval_k")]
    pub retrieval_k: usize,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: usize,
    #[serde(default)]
    pub backend_url: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigsFile {
    pub configs: Vec<ConfigEntry>,
}

/// Load the config matrix, resolving each entry's backend URL against the
/// runner-level fallback (CLI/env beats the file, per flag precedence).
pub fn load_configs(
    path: impl AsRef<Path>,
    override_url: Option<&str>,
    fallback_url: &str,
) -> Result<Vec<GenerationConfig>, EvalFsError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| EvalFsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: ConfigsFile = serde_json::from_str(&text).map_err(|source| EvalFsError::Parse {
        path: path.display().to_string(),
        source,
    })?;
    Ok(file
        .configs
        .into_iter()
        .map(|entry| GenerationConfig {
            model_name: entry.model,
            mode: entry.mode,
            tuning: entry.tuning,
            retrieval_k: entry.retrieval_k,
            timeout_ms: entry.timeout_ms,
            max_output_tokens: entry.max_output_tokens,
            backend_url: match override_url {
                Some(url) => url.to_string(),
                None => entry
                    .backend_url
                    .unwrap_or_else(|| fallback_url.to_string()),
            },
        })
        .collect())
}

/// One backend per distinct URL, routed per request by
/// `config.backend_url`. Lets a single suite run span several inference
/// servers (or stubs) without touching the core runner.
pub struct RoutingBackend {
    backends: BTreeMap<String, Box<dyn ChatBackend + Send + Sync>>,
}

impl RoutingBackend {
    pub fn for_configs(configs: &[GenerationConfig]) -> Result<Self, BackendInitError> {
        let mut backends = BTreeMap::new();
        for config in configs {
            if !backends.contains_key(&config.backend_url) {
                backends.insert(
                    config.backend_url.clone(),
                    backend_from_url(&config.backend_url)?,
                );
            }
        }
        Ok(Self { backends })
    }
}

impl ChatBackend for RoutingBackend {
    fn complete(
        &self,
        bundle: &PromptBundle,
        config: &GenerationConfig,
    ) -> Result<BackendReply, GenError> {
        match self.backends.get(&config.backend_url) {
            Some(b) => b.complete(bundle, config),
            None => Err(GenError::BackendUnavailable(format!(
                "no backend for url {}",
                config.backend_url
            ))),
        }
    }
}

/// Minimal filesystem for eval runs when the profile has no template: just
/// the declared homes plus /tmp.
pub fn minimal_vfs(profile: &sbash_core::profile::SystemProfile) -> sbash_core::vfs::VfsState {
    let mut template =
        String::from("/\td\t4096\t755\troot\t1700000000\n/tmp\td\t4096\t1777\troot\t1700000000\n");
    for user in &profile.users {
        let mut path = String::new();
        for comp in user.home.split('/').filter(|c| !c.is_empty()) {
            path.push('/');
            path.push_str(comp);
            template.push_str(&format!(
                "{path}\td\t4096\t755\t{}\t1700000000\n",
                user.username
            ));
        }
    }
    sbash_core::vfs::build_from_template(&template, profile).expect("synthetic template is valid")
}
