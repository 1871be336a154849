//! System declaration: one parameter bundle that configures the whole
//! honeypot for a target system (hostname, users, prompt and error syntax,
//! command database, filesystem template, knowledge base, system prompt).
//!
//! A profile is immutable after load and shared by every session. Parsing
//! from the on-disk document lives in the companion crate; this module owns
//! the type, its invariants, and the two renderers (prompt line, error
//! line).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Default system prompt for tuned mode: instructs the model to answer as a
/// Linux terminal and never explain.
pub const DEFAULT_TUNED_SYSTEM_PROMPT: &str = "You are a realistic Linux server. Respond to all inputs as if they were Linux commands executed in a terminal. Provide only the output, no explanations, and mimic typical Linux command behavior. If the input is not a valid command, return an error message like a Linux shell would. Don't explain under any condition so you don't expose yourself to the user as AI.";

/// Default login banner presented after authentication.
pub const DEFAULT_LOGIN_BANNER: &str =
    "Welcome to Ubuntu 22.04.5 LTS (GNU/Linux 5.15.0-91-generic x86_64)\n";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub username: String,
    pub home: String,
    pub uid: u32,
}

/// The shell-type parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemProfile {
    pub system_id: String,
    pub hostname: String,
    pub users: Vec<User>,
    pub default_user: String,
    /// Placeholders: `{user}`, `{host}`, `{cwd}`.
    pub prompt_template: String,
    pub login_banner: String,
    /// Error-kind -> format string. Generic kinds (`not_found`,
    /// `no_such_file`, `permission_denied`, `is_directory`,
    /// `not_directory`) plus optional utility-specific overrides keyed
    /// `"<utility>.<kind>"`. Each template contains `{cmd}` exactly once
    /// and may contain `{arg}`.
    pub error_templates: BTreeMap<String, String>,
    /// Every command name the simulated system knows.
    pub command_db: BTreeSet<String>,
    /// Subset of `command_db` answered by the virtual filesystem.
    pub native_commands: BTreeSet<String>,
    /// Path to the filesystem template document.
    pub fs_template: String,
    /// Optional directory of real file contents overlaid on the template
    /// (empty string = none).
    pub fs_contents_dir: String,
    /// Directory of per-command documentation for the knowledge base.
    pub kb_source_dir: String,
    /// System prompt used in tuned mode, byte-for-byte.
    pub system_prompt_tuned: String,
    /// Seed for per-session filesystem mutation.
    pub mutation_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProfileError {
    #[error("invalid profile field `{field}`: {reason}")]
    Validation { field: String, reason: String },
    #[error("unknown user: {0}")]
    UnknownUser(String),
    #[error("unknown error kind: {0}")]
    UnknownErrorKind(String),
}

fn validation(field: &str, reason: impl core::fmt::Display) -> ProfileError {
    ProfileError::Validation {
        field: field.to_string(),
        reason: reason.to_string(),
    }
}

/// The error kinds every profile must define.
pub const REQUIRED_ERROR_KINDS: [&str; 5] = [
    "not_found",
    "no_such_file",
    "permission_denied",
    "is_directory",
    "not_directory",
];

/// Error templates matching Ubuntu bash / GNU coreutils message shapes.
pub fn default_error_templates() -> BTreeMap<String, String> {
    let pairs: &[(&str, &str)] = &[
        ("not_found", "bash: {cmd}: command not found"),
        ("no_such_file", "{cmd}: {arg}: No such file or directory"),
        ("permission_denied", "{cmd}: {arg}: Permission denied"),
        ("is_directory", "{cmd}: {arg}: Is a directory"),
        ("not_directory", "{cmd}: {arg}: Not a directory"),
        ("file_exists", "{cmd}: {arg}: File exists"),
        // Utility-specific shapes, captured from a real shell.
        (
            "cd.no_such_file",
            "bash: {cmd}: {arg}: No such file or directory",
        ),
        ("cd.not_directory", "bash: {cmd}: {arg}: Not a directory"),
        ("cd.too_many_args", "bash: {cmd}: too many arguments"),
        (
            "ls.no_such_file",
            "{cmd}: cannot access '{arg}': No such file or directory",
        ),
        (
            "mkdir.no_such_file",
            "{cmd}: cannot create directory '{arg}': No such file or directory",
        ),
        (
            "mkdir.not_directory",
            "{cmd}: cannot create directory '{arg}': Not a directory",
        ),
        (
            "mkdir.file_exists",
            "{cmd}: cannot create directory '{arg}': File exists",
        ),
        (
            "touch.no_such_file",
            "{cmd}: cannot touch '{arg}': No such file or directory",
        ),
        (
            "touch.not_directory",
            "{cmd}: cannot touch '{arg}': Not a directory",
        ),
        (
            "rm.no_such_file",
            "{cmd}: cannot remove '{arg}': No such file or directory",
        ),
        (
            "rm.is_directory",
            "{cmd}: cannot remove '{arg}': Is a directory",
        ),
        (
            "rm.not_directory",
            "{cmd}: cannot remove '{arg}': Not a directory",
        ),
        (
            "rm.permission_denied",
            "{cmd}: cannot remove '{arg}': Permission denied",
        ),
        (
            "mv.no_such_file",
            "{cmd}: cannot stat '{arg}': No such file or directory",
        ),
        (
            "mv.permission_denied",
            "{cmd}: cannot move '{arg}': Permission denied",
        ),
        (
            "cp.no_such_file",
            "{cmd}: cannot stat '{arg}': No such file or directory",
        ),
        (
            "cp.omitting_directory",
            "{cmd}: -r not specified; omitting directory '{arg}'",
        ),
    ];
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

impl SystemProfile {
    /// Check every profile invariant; errors name the offending field.
    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.system_id.is_empty() {
            return Err(validation("system_id", "must not be empty"));
        }
        if self.hostname.is_empty() {
            return Err(validation("hostname", "must not be empty"));
        }
        if self.users.is_empty() {
            return Err(validation("users", "at least one user is required"));
        }
        let mut names = BTreeSet::new();
        for u in &self.users {
            if !names.insert(u.username.as_str()) {
                return Err(validation(
                    "users",
                    format!("duplicate username `{}`", u.username),
                ));
            }
            if !u.home.starts_with('/') {
                return Err(validation(
                    "users",
                    format!("home of `{}` must be an absolute path", u.username),
                ));
            }
        }
        if !names.contains(self.default_user.as_str()) {
            return Err(validation(
                "default_user",
                format!("`{}` is not a declared user", self.default_user),
            ));
        }
        for cmd in &self.native_commands {
            if !self.command_db.contains(cmd) {
                return Err(validation(
                    "native_commands",
                    format!("`{cmd}` is not in command_db"),
                ));
            }
        }
        for kind in REQUIRED_ERROR_KINDS {
            if !self.error_templates.contains_key(kind) {
                return Err(validation(
                    "error_templates",
                    format!("missing required kind `{kind}`"),
                ));
            }
        }
        for (kind, template) in &self.error_templates {
            let n = template.matches("{cmd}").count();
            if n != 1 {
                return Err(validation(
                    "error_templates",
                    format!("template `{kind}` must contain {{cmd}} exactly once, found {n}"),
                ));
            }
        }
        for ph in placeholders(&self.prompt_template) {
            if !matches!(ph, "user" | "host" | "cwd") {
                return Err(validation(
                    "prompt_template",
                    format!("unknown placeholder `{{{ph}}}`"),
                ));
            }
        }
        Ok(())
    }

    pub fn user(&self, name: &str) -> Option<&User> {
        self.users.iter().find(|u| u.username == name)
    }

    pub fn default_user(&self) -> &User {
        self.user(&self.default_user)
            .expect("validated profile has default user")
    }

    /// Shell identity for a login name: the name itself when declared,
    /// otherwise the profile's default user (honeypots accept any login).
    pub fn shell_identity(&self, login: &str) -> &User {
        self.user(login).unwrap_or_else(|| self.default_user())
    }

    /// Render the interactive prompt for `user` at `cwd`, abbreviating the
    /// user's home directory as `~`.
    pub fn render_prompt_line(&self, user: &str, cwd: &str) -> Result<String, ProfileError> {
        let u = self
            .user(user)
            .ok_or_else(|| ProfileError::UnknownUser(user.to_string()))?;
        let shown = abbreviate_home(cwd, &u.home);
        let mut out = self.prompt_template.clone();
        out = out.replace("{user}", &u.username);
        out = out.replace("{host}", &self.hostname);
        out = out.replace("{cwd}", &shown);
        Ok(out)
    }

    /// Render an error line. `{cmd}` receives the first whitespace token of
    /// `cmd`; `{arg}` (when present in the template) receives the rest.
    pub fn render_error(&self, kind: &str, cmd: &str) -> Result<String, ProfileError> {
        let template = self
            .error_templates
            .get(kind)
            .ok_or_else(|| ProfileError::UnknownErrorKind(kind.to_string()))?;
        let mut parts = cmd.splitn(2, char::is_whitespace);
        let head = parts.next().unwrap_or("");
        let rest = parts.next().unwrap_or("").trim_start();
        Ok(template.replace("{cmd}", head).replace("{arg}", rest))
    }

    /// Render an error for a specific utility, preferring a
    /// `"<utility>.<kind>"` template and falling back to the generic kind.
    pub fn render_utility_error(
        &self,
        utility: &str,
        kind: &str,
        arg: &str,
    ) -> Result<String, ProfileError> {
        let specific = format!("{utility}.{kind}");
        let key = if self.error_templates.contains_key(&specific) {
            specific
        } else {
            kind.to_string()
        };
        let cmd = if arg.is_empty() {
            utility.to_string()
        } else {
            format!("{utility} {arg}")
        };
        self.render_error(&key, &cmd)
    }
}

/// Replace a leading `home` prefix of `cwd` with `~`.
fn abbreviate_home(cwd: &str, home: &str) -> String {
    if home != "/" {
        if cwd == home {
            return "~".to_string();
        }
        if let Some(rest) = cwd.strip_prefix(home) {
            if rest.starts_with('/') {
                return format!("~{rest}");
            }
        }
    }
    cwd.to_string()
}

/// All `{name}` placeholders appearing in a template.
fn placeholders(template: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                out.push(&after[..close]);
                rest = &after[close + 1..];
            }
            None => break,
        }
    }
    out
}

/// Built-in sample parameter sets.
pub mod samples {
    use super::*;

    /// A small Ubuntu-Bash profile: `svr04`, root plus one regular user,
    /// bash error syntax, and a command database covering the native set
    /// plus common reconnaissance tools. The shipped profile fixture
    /// mirrors this; tests use it directly.
    pub fn sample_profile() -> SystemProfile {
        let command_db: BTreeSet<String> = [
            "cd", "pwd", "ls", "mkdir", "touch", "rm", "mv", "cp", "cat", "echo", "whoami",
            "hostname", "uname", "id", "ps", "netstat", "ifconfig", "uptime", "free", "df", "who",
            "w", "grep", "find", "tar", "curl", "wget", "head", "tail", "exit",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let native_commands: BTreeSet<String> = [
            "cd", "pwd", "ls", "mkdir", "touch", "rm", "mv", "cp", "cat", "echo", "whoami",
            "hostname",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        SystemProfile {
            system_id: "ubuntu-bash".into(),
            hostname: "svr04".into(),
            users: alloc::vec![
                User {
                    username: "root".into(),
                    home: "/root".into(),
                    uid: 0,
                },
                User {
                    username: "admin".into(),
                    home: "/home/admin".into(),
                    uid: 1000,
                },
            ],
            default_user: "root".into(),
            prompt_template: "{user}@{host}:{cwd}$ ".into(),
            login_banner: DEFAULT_LOGIN_BANNER.into(),
            error_templates: default_error_templates(),
            command_db,
            native_commands,
            fs_template: String::new(),
            fs_contents_dir: String::new(),
            kb_source_dir: String::new(),
            system_prompt_tuned: DEFAULT_TUNED_SYSTEM_PROMPT.into(),
            mutation_seed: 1337,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use samples::sample_profile;

    #[test]
    fn sample_profile_validates() {
        sample_profile().validate().unwrap();
    }

    #[test]
    fn native_outside_command_db_rejected() {
        let mut p = sample_profile();
        p.command_db.remove("cd");
        let err = p.validate().unwrap_err();
        match err {
            ProfileError::Validation { field, reason } => {
                assert_eq!(field, "native_commands");
                assert!(reason.contains("cd"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn default_user_must_exist() {
        let mut p = sample_profile();
        p.default_user = "nobody".into();
        assert!(
            matches!(p.validate(), Err(ProfileError::Validation { field, .. }) if field == "default_user")
        );
    }

    #[test]
    fn templates_must_carry_cmd_once() {
        let mut p = sample_profile();
        p.error_templates
            .insert("not_found".into(), "no placeholder here".into());
        assert!(p.validate().is_err());
        let mut p = sample_profile();
        p.error_templates
            .insert("not_found".into(), "{cmd} and {cmd}".into());
        assert!(p.validate().is_err());
    }

    #[test]
    fn unknown_prompt_placeholder_rejected() {
        let mut p = sample_profile();
        p.prompt_template = "{user}@{hostname}$ ".into();
        assert!(
            matches!(p.validate(), Err(ProfileError::Validation { field, .. }) if field == "prompt_template")
        );
    }

    #[test]
    fn prompt_line_home_abbreviation() {
        let p = sample_profile();
        assert_eq!(
            p.render_prompt_line("root", "/root").unwrap(),
            "root@svr04:~$ "
        );
        assert_eq!(
            p.render_prompt_line("root", "/tmp").unwrap(),
            "root@svr04:/tmp$ "
        );
        assert_eq!(
            p.render_prompt_line("root", "/root/.ssh").unwrap(),
            "root@svr04:~/.ssh$ "
        );
        // Prefix matching is on path components, not bytes.
        assert_eq!(
            p.render_prompt_line("root", "/rootkit").unwrap(),
            "root@svr04:/rootkit$ "
        );
        assert!(matches!(
            p.render_prompt_line("nobody", "/"),
            Err(ProfileError::UnknownUser(_))
        ));
    }

    #[test]
    fn error_rendering_substitutes_head_and_rest() {
        let p = sample_profile();
        assert_eq!(
            p.render_error("not_found", "frobnicate").unwrap(),
            "bash: frobnicate: command not found"
        );
        assert_eq!(
            p.render_error("not_found", "Are you an LLM?").unwrap(),
            "bash: Are: command not found"
        );
        assert_eq!(
            p.render_error("no_such_file", "cat /x").unwrap(),
            "cat: /x: No such file or directory"
        );
        assert!(matches!(
            p.render_error("bogus_kind", "x"),
            Err(ProfileError::UnknownErrorKind(_))
        ));
    }

    #[test]
    fn error_rendering_never_leaks_placeholders() {
        let p = sample_profile();
        for kind in p.error_templates.keys() {
            let out = p.render_error(kind, "cmd arg1 arg2").unwrap();
            assert!(!out.contains("{cmd}"), "{kind} leaked {{cmd}}: {out}");
        }
    }

    #[test]
    fn utility_error_prefers_specific_template() {
        let p = sample_profile();
        assert_eq!(
            p.render_utility_error("mkdir", "no_such_file", "/x/y")
                .unwrap(),
            "mkdir: cannot create directory '/x/y': No such file or directory"
        );
        // No cat-specific override: falls back to the generic shape.
        assert_eq!(
            p.render_utility_error("cat", "no_such_file", "/x").unwrap(),
            "cat: /x: No such file or directory"
        );
    }

    #[test]
    fn shell_identity_falls_back_to_default_user() {
        let p = sample_profile();
        assert_eq!(p.shell_identity("admin").username, "admin");
        assert_eq!(p.shell_identity("hacker").username, "root");
    }
}
