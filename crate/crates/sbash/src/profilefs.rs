//! Profile documents on disk.
//!
//! A profile is a single TOML file. Minimal example:
//!
//! ```toml
//! system_id = "ubuntu-bash"
//! hostname = "svr04"
//! default_user = "root"
//! command_db = ["cd", "ls", "uname"]
//! native_commands = ["cd", "ls"]
//! fs_template = "fs/ubuntu.fs.tsv"
//!
//! [[users]]
//! username = "root"
//! home = "/root"
//! uid = 0
//! ```
//!
//! Optional fields and their defaults: `prompt_template`
//! (`"{user}@{host}:{cwd}$ "`), `login_banner`, `error_templates`
//! (missing kinds are filled from the built-in Ubuntu-bash set),
//! `system_prompt_tuned` (the built-in Linux-server prompt),
//! `mutation_seed` (`0`), `fs_contents_dir` (none), `kb_source_dir`
//! (none). Relative paths are resolved against the profile file's
//! directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use sbash_core::profile::{
    default_error_templates, SystemProfile, User, DEFAULT_LOGIN_BANNER, DEFAULT_TUNED_SYSTEM_PROMPT,
};

#[derive(Debug, thiserror::Error)]
pub enum ProfileFsError {
    #[error("cannot read profile {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse profile {path}: {source}")]
    Parse {
        path: String,
        source: toml::de::Error,
    },
    #[error(transparent)]
    Invalid(#[from] sbash_core::profile::ProfileError),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileDoc {
    system_id: String,
    hostname: String,
    users: Vec<UserDoc>,
    default_user: String,
    #[serde(default)]
    prompt_template: Option<String>,
    #[serde(default)]
    login_banner: Option<String>,
    #[serde(default)]
    error_templates: BTreeMap<String, String>,
    command_db: BTreeSet<String>,
    native_commands: BTreeSet<String>,
    #[serde(default)]
    fs_template: Option<String>,
    #[serde(default)]
    fs_contents_dir: Option<String>,
    #[serde(default)]
    kb_source_dir: Option<String>,
    #[serde(default)]
    system_prompt_tuned: Option<String>,
    #[serde(default)]
    mutation_seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UserDoc {
    username: String,
    home: String,
    uid: u32,
}

fn resolve(base: &Path, value: &str) -> String {
    if value.is_empty() || value.starts_with('/') {
        return value.to_string();
    }
    base.join(value).to_string_lossy().into_owned()
}

/// Load, default-fill, resolve paths, and validate a profile document.
pub fn load_profile(path: impl AsRef<Path>) -> Result<SystemProfile, ProfileFsError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ProfileFsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let doc: ProfileDoc = toml::from_str(&text).map_err(|source| ProfileFsError::Parse {
        path: path.display().to_string(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();

    let mut error_templates = default_error_templates();
    for (k, v) in doc.error_templates {
        error_templates.insert(k, v);
    }

    let profile = SystemProfile {
        system_id: doc.system_id,
        hostname: doc.hostname,
        users: doc
            .users
            .into_iter()
            .map(|u| User {
                username: u.username,
                home: u.home,
                uid: u.uid,
            })
            .collect(),
        default_user: doc.default_user,
        prompt_template: doc
            .prompt_template
            .unwrap_or_else(|| "{user}@{host}:{cwd}$ ".to_string()),
        login_banner: doc
            .login_banner
            .unwrap_or_else(|| DEFAULT_LOGIN_BANNER.to_string()),
        error_templates,
        command_db: doc.command_db,
        native_commands: doc.native_commands,
        fs_template: resolve(&base, doc.fs_template.as_deref().unwrap_or("")),
        fs_contents_dir: resolve(&base, doc.fs_contents_dir.as_deref().unwrap_or("")),
        kb_source_dir: resolve(&base, doc.kb_source_dir.as_deref().unwrap_or("")),
        system_prompt_tuned: doc
            .system_prompt_tuned
            .unwrap_or_else(|| DEFAULT_TUNED_SYSTEM_PROMPT.to_string()),
        mutation_seed: doc.mutation_seed.unwrap_or(0),
    };
    profile.validate()?;
    Ok(profile)
}

/// Serialize a profile back into the document format. Every field is
/// explicit, so `load_profile(serialize_profile(p)) == p`.
pub fn serialize_profile(profile: &SystemProfile) -> String {
    let doc = ProfileDoc {
        system_id: profile.system_id.clone(),
        hostname: profile.hostname.clone(),
        users: profile
            .users
            .iter()
            .map(|u| UserDoc {
                username: u.username.clone(),
                home: u.home.clone(),
                uid: u.uid,
            })
            .collect(),
        default_user: profile.default_user.clone(),
        prompt_template: Some(profile.prompt_template.clone()),
        login_banner: Some(profile.login_banner.clone()),
        error_templates: profile.error_templates.clone().into_iter().collect(),
        command_db: profile.command_db.clone(),
        native_commands: profile.native_commands.clone(),
        fs_template: Some(profile.fs_template.clone()),
        fs_contents_dir: Some(profile.fs_contents_dir.clone()),
        kb_source_dir: Some(profile.kb_source_dir.clone()),
        system_prompt_tuned: Some(profile.system_prompt_tuned.clone()),
        mutation_seed: Some(profile.mutation_seed),
    };
    toml::to_string_pretty(&doc).expect("profile is serializable")
}

/// Build the session filesystem for a profile: parse the template file and
/// overlay any captured file contents.
pub fn build_vfs(profile: &SystemProfile) -> Result<sbash_core::vfs::VfsState, String> {
    if profile.fs_template.is_empty() {
        return Err("profile has no fs_template".to_string());
    }
    let text = std::fs::read_to_string(&profile.fs_template)
        .map_err(|e| format!("cannot read fs template {}: {e}", profile.fs_template))?;
    let mut state = sbash_core::vfs::build_from_template(&text, profile)
        .map_err(|e| format!("fs template {}: {e}", profile.fs_template))?;
    if !profile.fs_contents_dir.is_empty() {
        overlay_contents(
            &mut state,
            Path::new(&profile.fs_contents_dir),
            Path::new("/"),
        )
        .map_err(|e| format!("contents overlay: {e}"))?;
    }
    Ok(state)
}

/// Recursively attach files under `dir` to the matching template paths.
/// Files in the overlay that the template does not know are ignored.
fn overlay_contents(
    state: &mut sbash_core::vfs::VfsState,
    dir: &Path,
    virtual_dir: &Path,
) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        let vpath = virtual_dir.join(&name);
        let ftype = entry.file_type()?;
        if ftype.is_dir() {
            overlay_contents(state, &entry.path(), &vpath)?;
        } else if ftype.is_file() {
            let bytes = std::fs::read(entry.path())?;
            let _ = state.attach_content(&vpath.to_string_lossy(), bytes);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
system_id = "ubuntu-bash"
hostname = "svr04"
default_user = "root"
command_db = ["cd", "ls", "uname"]
native_commands = ["cd", "ls"]

[[users]]
username = "root"
home = "/root"
uid = 0
"#;

    fn write_profile(dir: &tempfile::TempDir, text: &str) -> std::path::PathBuf {
        let path = dir.path().join("profile.toml");
        std::fs::write(&path, text).unwrap();
        path
    }

    #[test]
    fn minimal_profile_round_trips_declared_fields() {
        let dir = tempfile::tempdir().unwrap();
        let p = load_profile(write_profile(&dir, MINIMAL)).unwrap();
        assert_eq!(p.hostname, "svr04");
        assert_eq!(p.default_user, "root");
        assert_eq!(p.users[0].home, "/root");
        assert_eq!(p.prompt_template, "{user}@{host}:{cwd}$ ");
    }

    #[test]
    fn missing_system_prompt_gets_the_verbatim_default() {
        let dir = tempfile::tempdir().unwrap();
        let p = load_profile(write_profile(&dir, MINIMAL)).unwrap();
        assert_eq!(p.system_prompt_tuned, DEFAULT_TUNED_SYSTEM_PROMPT);
        assert!(p
            .system_prompt_tuned
            .starts_with("You are a realistic Linux server."));
    }

    #[test]
    fn native_outside_db_is_a_validation_error() {
        let dir = tempfile::tempdir().unwrap();
        let bad = MINIMAL.replace(
            "native_commands = [\"cd\", \"ls\"]",
            "native_commands = [\"cd\", \"ls\", \"brand-new\"]",
        );
        let err = load_profile(write_profile(&dir, &bad)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("native_commands"), "{msg}");
    }

    #[test]
    fn malformed_document_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_profile(write_profile(&dir, "not toml [[[")).unwrap_err();
        assert!(matches!(err, ProfileFsError::Parse { .. }));
    }

    #[test]
    fn serialize_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let p = load_profile(write_profile(&dir, MINIMAL)).unwrap();
        let text = serialize_profile(&p);
        let path = dir.path().join("round.toml");
        std::fs::write(&path, &text).unwrap();
        let p2 = load_profile(&path).unwrap();
        assert_eq!(p, p2);
    }

    #[test]
    fn relative_paths_resolve_against_profile_dir() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!("fs_template = \"fs/t.tsv\"\n{MINIMAL}");
        let p = load_profile(write_profile(&dir, &text)).unwrap();
        assert_eq!(p.fs_template, dir.path().join("fs/t.tsv").to_string_lossy());
    }

    #[test]
    fn deterministic_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_profile(&dir, MINIMAL);
        let a = load_profile(&path).unwrap();
        let b = load_profile(&path).unwrap();
        assert_eq!(a, b);
    }
}
