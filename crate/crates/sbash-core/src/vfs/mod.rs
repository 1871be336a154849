//! Virtual filesystem: an in-memory tree built from a template captured on
//! a real system, mutated per session for variety, and driven by the native
//! command handlers in [`exec`].
//!
//! The template is a line-oriented TSV document, one node per line:
//!
//! ```text
//! path<TAB>kind<TAB>size<TAB>mode<TAB>owner<TAB>mtime
//! ```
//!
//! where `kind` is `d` (directory), `f` (file), or `l:<target>` (symlink),
//! `mode` is octal (`755`), and `mtime` is Unix seconds. Lines starting
//! with `#` and blank lines are ignored. Missing intermediate directories
//! are created implicitly and patched when their own line arrives, so any
//! line order parses. Symlinks are displayed but never followed.
//!
//! Template files carry node metadata only; real file contents (for `cat`)
//! are attached separately via [`VfsState::attach_content`].

pub mod exec;
pub mod mutate;

pub use exec::{exec_native, native_supports, NativeResult};
pub use mutate::mutate;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::profile::SystemProfile;

pub type Timestamp = i64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    File,
    Directory,
    /// Stored target path, unresolved.
    Symlink(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VfsNode {
    pub name: String,
    pub kind: NodeKind,
    /// Directories only; keys equal child names, so iteration is already
    /// in C-locale sort order.
    pub children: BTreeMap<String, VfsNode>,
    /// Files only. `None` is a size-only stub (template nodes without
    /// captured content).
    pub content: Option<Vec<u8>>,
    pub owner: String,
    /// Permission bits, e.g. `0o755`.
    pub mode: u32,
    pub size: u64,
    pub mtime: Timestamp,
}

impl VfsNode {
    pub fn dir(name: &str, owner: &str, mode: u32, mtime: Timestamp) -> Self {
        Self {
            name: name.to_string(),
            kind: NodeKind::Directory,
            children: BTreeMap::new(),
            content: None,
            owner: owner.to_string(),
            mode,
            size: 4096,
            mtime,
        }
    }

    pub fn file(name: &str, owner: &str, mode: u32, mtime: Timestamp, size: u64) -> Self {
        Self {
            name: name.to_string(),
            kind: NodeKind::Directory,
            children: BTreeMap::new(),
            content: None,
            owner: owner.to_string(),
            mode,
            size,
            mtime,
        }
        .with_kind(NodeKind::File)
    }

    fn with_kind(mut self, kind: NodeKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn is_dir(&self) -> bool {
        matches!(self.kind, NodeKind::Directory)
    }

    pub fn is_file(&self) -> bool {
        matches!(self.kind, NodeKind::File)
    }

    pub fn is_symlink(&self) -> bool {
        matches!(self.kind, NodeKind::Symlink(_))
    }

    /// Attach real bytes to a file node, keeping `size` consistent.
    pub fn set_content(&mut self, bytes: Vec<u8>) {
        self.size = bytes.len() as u64;
        self.content = Some(bytes);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VfsError {
    #[error("template parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("default user's home `{0}` is missing from the template")]
    MissingHome(String),
    #[error("no such path: {0}")]
    NotFound(String),
    #[error("not a directory: {0}")]
    NotADirectory(String),
    #[error("not a file: {0}")]
    NotAFile(String),
    #[error("tree invariant violated: {0}")]
    Invariant(String),
}

/// Per-session filesystem state: the tree, the working directory, the shell
/// identity, and the session-injected wall clock used for new timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VfsState {
    pub root: VfsNode,
    cwd: String,
    pub session_user: String,
    now: Timestamp,
}

impl VfsState {
    pub fn cwd(&self) -> &str {
        &self.cwd
    }

    pub fn now(&self) -> Timestamp {
        self.now
    }

    /// Inject the wall clock; `exec_native` stamps mutations with it.
    pub fn set_now(&mut self, now: Timestamp) {
        self.now = now;
    }

    pub fn lookup(&self, path: &str) -> Option<&VfsNode> {
        let path = normalize(&self.cwd, path);
        let mut node = &self.root;
        for comp in components(&path) {
            node = node.children.get(comp)?;
        }
        Some(node)
    }

    pub fn lookup_mut(&mut self, path: &str) -> Option<&mut VfsNode> {
        let path = normalize(&self.cwd, path);
        let mut node = &mut self.root;
        for comp in components(&path) {
            node = node.children.get_mut(comp)?;
        }
        Some(node)
    }

    pub(crate) fn set_cwd(&mut self, absolute: String) {
        debug_assert!(absolute.starts_with('/'));
        self.cwd = absolute;
    }

    /// Attach real content to a template file (used for overlay files such
    /// as `/etc/passwd`).
    pub fn attach_content(&mut self, path: &str, bytes: Vec<u8>) -> Result<(), VfsError> {
        let node = self
            .lookup_mut(path)
            .ok_or_else(|| VfsError::NotFound(path.to_string()))?;
        if !node.is_file() {
            return Err(VfsError::NotAFile(path.to_string()));
        }
        node.set_content(bytes);
        Ok(())
    }

    /// Walk the whole tree and re-check every structural invariant.
    pub fn validate_tree(&self) -> Result<(), VfsError> {
        fn walk(node: &VfsNode, path: &str) -> Result<(), VfsError> {
            match &node.kind {
                NodeKind::Directory => {
                    if node.content.is_some() {
                        return Err(VfsError::Invariant(format!(
                            "directory {path} carries content"
                        )));
                    }
                }
                NodeKind::File => {
                    if !node.children.is_empty() {
                        return Err(VfsError::Invariant(format!("file {path} has children")));
                    }
                    if let Some(c) = &node.content {
                        if c.len() as u64 != node.size {
                            return Err(VfsError::Invariant(format!(
                                "file {path} size {} != content length {}",
                                node.size,
                                c.len()
                            )));
                        }
                    }
                }
                NodeKind::Symlink(_) => {
                    if !node.children.is_empty() || node.content.is_some() {
                        return Err(VfsError::Invariant(format!(
                            "symlink {path} has children or content"
                        )));
                    }
                }
            }
            for (key, child) in &node.children {
                if key != &child.name {
                    return Err(VfsError::Invariant(format!(
                        "child key `{key}` != name `{}` under {path}",
                        child.name
                    )));
                }
                if key.is_empty() || key.contains('/') {
                    return Err(VfsError::Invariant(format!(
                        "illegal child name `{key}` under {path}"
                    )));
                }
                let child_path = join_path(path, key);
                walk(child, &child_path)?;
            }
            Ok(())
        }

        if !self.root.is_dir() || self.root.name != "/" {
            return Err(VfsError::Invariant(
                "root must be a directory named /".into(),
            ));
        }
        walk(&self.root, "/")?;
        match self.lookup(&self.cwd) {
            Some(n) if n.is_dir() => Ok(()),
            _ => Err(VfsError::Invariant(format!(
                "cwd {} does not resolve to a directory",
                self.cwd
            ))),
        }
    }
}

/// Normalize `arg` relative to `cwd` into an absolute path with `.`/`..`
/// resolved textually (logical resolution, as bash's `cd` does).
pub fn normalize(cwd: &str, arg: &str) -> String {
    let mut comps: Vec<&str> = Vec::new();
    let chain: [&str; 2] = if arg.starts_with('/') {
        ["", arg]
    } else {
        [cwd, arg]
    };
    for part in chain {
        for comp in part.split('/') {
            match comp {
                "" | "." => {}
                ".." => {
                    comps.pop();
                }
                c => comps.push(c),
            }
        }
    }
    if comps.is_empty() {
        "/".to_string()
    } else {
        format!("/{}", comps.join("/"))
    }
}

/// Components of a normalized absolute path (empty for `/`).
pub fn components(path: &str) -> impl Iterator<Item = &str> {
    path.split('/').filter(|c| !c.is_empty())
}

pub fn join_path(dir: &str, name: &str) -> String {
    if dir == "/" {
        format!("/{name}")
    } else {
        format!("{dir}/{name}")
    }
}

/// Parent path and final component of a normalized absolute path.
/// Returns `None` for the root itself.
pub fn split_parent(path: &str) -> Option<(String, &str)> {
    if path == "/" {
        return None;
    }
    let idx = path.rfind('/').unwrap();
    let name = &path[idx + 1..];
    let parent = if idx == 0 { "/" } else { &path[..idx] };
    Some((parent.to_string(), name))
}

/// True if `candidate` equals `inside` or is one of its ancestors.
pub fn is_ancestor_or_self(candidate: &str, inside: &str) -> bool {
    candidate == inside || candidate == "/" || inside.starts_with(&format!("{candidate}/"))
}

fn new_root() -> VfsNode {
    VfsNode::dir("/", "root", 0o755, 0)
}

/// Parse the TSV template document into a tree.
pub fn parse_template(text: &str) -> Result<VfsNode, VfsError> {
    let mut root = new_root();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(VfsError::Parse {
                line: line_no,
                reason: format!("expected 6 tab-separated fields, got {}", fields.len()),
            });
        }
        let (path, kind_s, size_s, mode_s, owner, mtime_s) = (
            fields[0], fields[1], fields[2], fields[3], fields[4], fields[5],
        );
        if !path.starts_with('/') {
            return Err(VfsError::Parse {
                line: line_no,
                reason: format!("path must be absolute: {path}"),
            });
        }
        let kind = match kind_s {
            "d" => NodeKind::Directory,
            "f" => NodeKind::File,
            s if s.starts_with("l:") => NodeKind::Symlink(s[2..].to_string()),
            other => {
                return Err(VfsError::Parse {
                    line: line_no,
                    reason: format!("unknown kind `{other}`"),
                })
            }
        };
        let size: u64 = size_s.parse().map_err(|_| VfsError::Parse {
            line: line_no,
            reason: format!("bad size `{size_s}`"),
        })?;
        let mode = u32::from_str_radix(mode_s, 8).map_err(|_| VfsError::Parse {
            line: line_no,
            reason: format!("bad octal mode `{mode_s}`"),
        })?;
        let mtime: i64 = mtime_s.parse().map_err(|_| VfsError::Parse {
            line: line_no,
            reason: format!("bad mtime `{mtime_s}`"),
        })?;

        let norm = normalize("/", path);
        if norm == "/" {
            root.owner = owner.to_string();
            root.mode = mode;
            root.mtime = mtime;
            root.size = size;
            continue;
        }
        let (parent_path, name) = split_parent(&norm).expect("non-root path");
        let parent = ensure_dirs(&mut root, &parent_path).map_err(|reason| VfsError::Parse {
            line: line_no,
            reason,
        })?;
        let node = parent
            .children
            .entry(name.to_string())
            .or_insert_with(|| VfsNode::dir(name, owner, mode, mtime));
        node.kind = kind.clone();
        node.owner = owner.to_string();
        node.mode = mode;
        node.mtime = mtime;
        node.size = size;
        if !matches!(kind, NodeKind::Directory) && !node.children.is_empty() {
            return Err(VfsError::Parse {
                line: line_no,
                reason: format!("{path} declared as non-directory but has children"),
            });
        }
    }
    Ok(root)
}

/// Get (creating placeholders as needed) the directory at `path`.
fn ensure_dirs<'a>(root: &'a mut VfsNode, path: &str) -> Result<&'a mut VfsNode, String> {
    let mut node = root;
    let mut walked = String::new();
    for comp in components(path) {
        walked.push('/');
        walked.push_str(comp);
        let owner = node.owner.clone();
        node = node
            .children
            .entry(comp.to_string())
            .or_insert_with(|| VfsNode::dir(comp, &owner, 0o755, 0));
        if !node.is_dir() {
            return Err(format!("{walked} is not a directory"));
        }
    }
    Ok(node)
}

/// Serialize a tree back into the template format: pre-order, children in
/// name order, root line first. `parse_template(export_template(t)) == t`.
pub fn export_template(root: &VfsNode) -> String {
    fn line(out: &mut String, path: &str, node: &VfsNode) {
        let kind = match &node.kind {
            NodeKind::Directory => "d".to_string(),
            NodeKind::File => "f".to_string(),
            NodeKind::Symlink(t) => format!("l:{t}"),
        };
        out.push_str(&format!(
            "{path}\t{kind}\t{}\t{:o}\t{}\t{}\n",
            node.size, node.mode, node.owner, node.mtime
        ));
    }
    fn walk(out: &mut String, path: &str, node: &VfsNode) {
        for (name, child) in &node.children {
            let child_path = join_path(path, name);
            line(out, &child_path, child);
            walk(out, &child_path, child);
        }
    }
    let mut out = String::new();
    line(&mut out, "/", root);
    walk(&mut out, "/", root);
    out
}

/// Build session state from a template document: tree as captured, working
/// directory at the default user's home.
pub fn build_from_template(template: &str, profile: &SystemProfile) -> Result<VfsState, VfsError> {
    let root = parse_template(template)?;
    let user = profile.default_user();
    let state = VfsState {
        root,
        cwd: user.home.clone(),
        session_user: user.username.clone(),
        now: 0,
    };
    match state.lookup(&user.home) {
        Some(n) if n.is_dir() => {}
        _ => return Err(VfsError::MissingHome(user.home.clone())),
    }
    Ok(state)
}
