//! Native command execution against the virtual tree.
//!
//! Covers the command/flag subset the tree can answer faithfully:
//!
//! ```text
//! cd PATH            pwd              ls [-l -a] [PATH...]
//! mkdir [-p] PATH..  touch PATH..     rm [-r -f] PATH..
//! mv SRC.. DST       cp [-r] SRC DST  cat PATH..
//! echo [-n] ARG..    whoami           hostname
//! ```
//!
//! Anything else (unknown flags, `cat` with no operand, compound input)
//! fails [`native_supports`] and is routed to the model instead. Error
//! lines render through the profile's error templates so the message syntax
//! follows the declared system type; the few multi-operand usage messages
//! (`mv: cannot move 'a' to a subdirectory of itself, 'b'`) are emitted
//! directly in the GNU coreutils shape.
//!
//! One deliberate divergence from a real shell: `rm`/`mv` refuse to touch
//! the working directory or any of its ancestors, so the session's `cwd`
//! always stays valid.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::profile::SystemProfile;
use crate::timefmt::{civil_from_epoch, MONTH_ABBREV};

use super::{
    components, is_ancestor_or_self, join_path, normalize, split_parent, NodeKind, VfsNode,
    VfsState,
};

/// Outcome of a native execution. Shell-level failures come back in-band as
/// a nonzero exit code plus stderr text, exactly like a real shell.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NativeResult {
    pub stdout: String,
    pub stderr: String,
    pub exit_code: i32,
    pub state_changed: bool,
}

impl NativeResult {
    /// Session transcript: stdout then stderr (the capture tooling records
    /// reference output with the same convention).
    pub fn combined(&self) -> String {
        let mut out = self.stdout.clone();
        out.push_str(&self.stderr);
        out
    }
}

struct Exec<'a> {
    state: &'a mut VfsState,
    profile: &'a SystemProfile,
    out: String,
    err: String,
    exit: i32,
    changed: bool,
}

impl<'a> Exec<'a> {
    fn error(&mut self, utility: &str, kind: &str, arg: &str) {
        let line = self
            .profile
            .render_utility_error(utility, kind, arg)
            .unwrap_or_else(|_| format!("{utility}: {arg}: error"));
        self.err.push_str(&line);
        self.err.push('\n');
        if self.exit == 0 {
            self.exit = 1;
        }
    }

    fn raw_error(&mut self, line: String) {
        self.err.push_str(&line);
        self.err.push('\n');
        if self.exit == 0 {
            self.exit = 1;
        }
    }

    fn finish(self) -> NativeResult {
        NativeResult {
            stdout: self.out,
            stderr: self.err,
            exit_code: self.exit,
            state_changed: self.changed,
        }
    }
}

/// Split argv (after the command name) into single-letter flags and
/// operands. Returns `None` if any flag letter is outside `allowed`.
/// A bare `-` or anything after `--` counts as an operand.
fn parse_flags<'v>(args: &'v [String], allowed: &str) -> Option<(Vec<char>, Vec<&'v str>)> {
    let mut flags = Vec::new();
    let mut operands = Vec::new();
    let mut no_more_flags = false;
    for arg in args {
        if !no_more_flags && arg == "--" {
            no_more_flags = true;
            continue;
        }
        if !no_more_flags && arg.len() > 1 && arg.starts_with('-') && !arg.starts_with("--") {
            for c in arg.chars().skip(1) {
                if !allowed.contains(c) {
                    return None;
                }
                flags.push(c);
            }
        } else if !no_more_flags && arg.starts_with("--") {
            return None;
        } else {
            operands.push(arg.as_str());
        }
    }
    Some((flags, operands))
}

/// Whether this argv stays on the native path. Unknown commands, unknown
/// flags, and shapes the tree cannot answer faithfully return `false`.
pub fn native_supports(argv: &[String]) -> bool {
    let Some(head) = argv.first() else {
        return false;
    };
    let args = &argv[1..];
    match head.as_str() {
        "cd" => parse_flags(args, "").is_some(),
        "pwd" => args.is_empty(),
        "ls" => parse_flags(args, "la").is_some(),
        "mkdir" => parse_flags(args, "p").is_some(),
        "touch" => parse_flags(args, "").is_some(),
        "rm" => parse_flags(args, "rRf").is_some(),
        "mv" => parse_flags(args, "").is_some(),
        "cp" => parse_flags(args, "rR").is_some(),
        // `cat` with no operand reads stdin; that cannot be emulated here.
        "cat" => matches!(parse_flags(args, ""), Some((_, operands)) if !operands.is_empty()),
        "echo" => args.iter().all(|a| a == "-n" || !a.starts_with('-')),
        "whoami" => args.is_empty(),
        "hostname" => args.is_empty(),
        _ => false,
    }
}

/// Execute a native command against the tree. `argv[0]` must be one of the
/// supported commands (see [`native_supports`]).
pub fn exec_native(state: &mut VfsState, profile: &SystemProfile, argv: &[String]) -> NativeResult {
    let mut ex = Exec {
        state,
        profile,
        out: String::new(),
        err: String::new(),
        exit: 0,
        changed: false,
    };
    let Some(head) = argv.first() else {
        return ex.finish();
    };
    let args = &argv[1..];
    match head.as_str() {
        "cd" => cmd_cd(&mut ex, args),
        "pwd" => {
            let line = format!("{}\n", ex.state.cwd());
            ex.out.push_str(&line);
        }
        "ls" => cmd_ls(&mut ex, args),
        "mkdir" => cmd_mkdir(&mut ex, args),
        "touch" => cmd_touch(&mut ex, args),
        "rm" => cmd_rm(&mut ex, args),
        "mv" => cmd_mv(&mut ex, args),
        "cp" => cmd_cp(&mut ex, args),
        "cat" => cmd_cat(&mut ex, args),
        "echo" => cmd_echo(&mut ex, args),
        "whoami" => {
            let line = format!("{}\n", ex.state.session_user);
            ex.out.push_str(&line);
        }
        "hostname" => {
            let line = format!("{}\n", ex.profile.hostname);
            ex.out.push_str(&line);
        }
        other => {
            ex.raw_error(
                profile
                    .render_error("not_found", other)
                    .unwrap_or_else(|_| format!("{other}: command not found")),
            );
            ex.exit = 127;
        }
    }
    ex.finish()
}

fn cmd_cd(ex: &mut Exec, args: &[String]) {
    let (_, operands) = parse_flags(args, "").expect("checked by native_supports");
    if operands.len() > 1 {
        ex.error("cd", "too_many_args", "");
        return;
    }
    let typed = operands.first().copied();
    let target = match typed {
        Some(p) => normalize(ex.state.cwd(), p),
        None => {
            let user = ex.state.session_user.clone();
            ex.profile.shell_identity(&user).home.clone()
        }
    };
    let shown = typed.unwrap_or(target.as_str());
    match ex.state.lookup(&target) {
        None => ex.error("cd", "no_such_file", shown),
        Some(n) if !n.is_dir() => ex.error("cd", "not_directory", shown),
        Some(_) => ex.state.set_cwd(target),
    }
}

fn cmd_mkdir(ex: &mut Exec, args: &[String]) {
    let (flags, operands) = parse_flags(args, "p").expect("checked");
    let parents = flags.contains(&'p');
    if operands.is_empty() {
        ex.raw_error("mkdir: missing operand\nTry 'mkdir --help' for more information.".into());
        return;
    }
    for typed in operands {
        let path = normalize(ex.state.cwd(), typed);
        if path == "/" {
            ex.error("mkdir", "file_exists", typed);
            continue;
        }
        if parents {
            if mkdir_parents(ex, &path).is_err() {
                ex.error("mkdir", "not_directory", typed);
            }
            continue;
        }
        if ex.state.lookup(&path).is_some() {
            ex.error("mkdir", "file_exists", typed);
            continue;
        }
        let (parent_path, name) = split_parent(&path).expect("non-root");
        let (user, now) = (ex.state.session_user.clone(), ex.state.now());
        match ex.state.lookup_mut(&parent_path) {
            None => ex.error("mkdir", "no_such_file", typed),
            Some(p) if !p.is_dir() => ex.error("mkdir", "not_directory", typed),
            Some(p) => {
                p.children
                    .insert(name.to_string(), VfsNode::dir(name, &user, 0o755, now));
                p.mtime = now;
                ex.changed = true;
            }
        }
    }
}

fn mkdir_parents(ex: &mut Exec, path: &str) -> Result<(), ()> {
    let mut walked = String::from("/");
    let comps: Vec<String> = components(path).map(|s| s.to_string()).collect();
    let (user, now) = (ex.state.session_user.clone(), ex.state.now());
    for comp in comps {
        let next = join_path(&walked, &comp);
        match ex.state.lookup(&next) {
            Some(n) if n.is_dir() => {}
            Some(_) => return Err(()),
            None => {
                let parent = ex.state.lookup_mut(&walked).expect("walked path exists");
                parent
                    .children
                    .insert(comp.clone(), VfsNode::dir(&comp, &user, 0o755, now));
                parent.mtime = now;
                ex.changed = true;
            }
        }
        walked = next;
    }
    Ok(())
}

fn cmd_touch(ex: &mut Exec, args: &[String]) {
    let (_, operands) = parse_flags(args, "").expect("checked");
    if operands.is_empty() {
        ex.raw_error(
            "touch: missing file operand\nTry 'touch --help' for more information.".into(),
        );
        return;
    }
    for typed in operands {
        let path = normalize(ex.state.cwd(), typed);
        let now = ex.state.now();
        if let Some(node) = ex.state.lookup_mut(&path) {
            node.mtime = now;
            ex.changed = true;
            continue;
        }
        let Some((parent_path, name)) = split_parent(&path) else {
            continue;
        };
        let user = ex.state.session_user.clone();
        match ex.state.lookup_mut(&parent_path) {
            None => ex.error("touch", "no_such_file", typed),
            Some(p) if !p.is_dir() => ex.error("touch", "not_directory", typed),
            Some(p) => {
                let mut node = VfsNode::file(name, &user, 0o644, now, 0);
                node.content = Some(Vec::new());
                p.children.insert(name.to_string(), node);
                p.mtime = now;
                ex.changed = true;
            }
        }
    }
}

fn cmd_rm(ex: &mut Exec, args: &[String]) {
    let (flags, operands) = parse_flags(args, "rRf").expect("checked");
    let recursive = flags.contains(&'r') || flags.contains(&'R');
    let force = flags.contains(&'f');
    if operands.is_empty() {
        if !force {
            ex.raw_error("rm: missing operand\nTry 'rm --help' for more information.".into());
        }
        return;
    }
    for typed in operands {
        let path = normalize(ex.state.cwd(), typed);
        let node = match ex.state.lookup(&path) {
            None => {
                if !force {
                    ex.error("rm", "no_such_file", typed);
                }
                continue;
            }
            Some(n) => n,
        };
        if node.is_dir() && !recursive {
            ex.error("rm", "is_directory", typed);
            continue;
        }
        // Never invalidate the session: refuse the cwd and its ancestors.
        let cwd = ex.state.cwd().to_string();
        if node.is_dir() && is_ancestor_or_self(&path, &cwd) {
            ex.error("rm", "permission_denied", typed);
            continue;
        }
        let (parent_path, name) = split_parent(&path).expect("root is an ancestor of cwd");
        let now = ex.state.now();
        let parent = ex.state.lookup_mut(&parent_path).expect("parent exists");
        parent.children.remove(name);
        parent.mtime = now;
        ex.changed = true;
    }
}

fn cmd_mv(ex: &mut Exec, args: &[String]) {
    let (_, operands) = parse_flags(args, "").expect("checked");
    match operands.len() {
        0 => {
            ex.raw_error("mv: missing file operand\nTry 'mv --help' for more information.".into());
            return;
        }
        1 => {
            ex.raw_error(format!(
                "mv: missing destination file operand after '{}'\nTry 'mv --help' for more information.",
                operands[0]
            ));
            return;
        }
        _ => {}
    }
    let (sources, dst_typed) = operands.split_at(operands.len() - 1);
    let dst_typed = dst_typed[0];
    let dst_path = normalize(ex.state.cwd(), dst_typed);
    let dst_is_dir = matches!(ex.state.lookup(&dst_path), Some(n) if n.is_dir());
    if sources.len() > 1 && !dst_is_dir {
        ex.raw_error(format!("mv: target '{dst_typed}' is not a directory"));
        return;
    }

    for src_typed in sources {
        let src_path = normalize(ex.state.cwd(), src_typed);
        let Some(src_node) = ex.state.lookup(&src_path) else {
            ex.error("mv", "no_such_file", src_typed);
            continue;
        };
        let src_is_dir = src_node.is_dir();
        let cwd = ex.state.cwd().to_string();
        if src_is_dir && is_ancestor_or_self(&src_path, &cwd) {
            ex.error("mv", "permission_denied", src_typed);
            continue;
        }
        let (target_path, shown_target) = if dst_is_dir {
            let name = split_parent(&src_path).expect("non-root").1;
            (
                join_path(&dst_path, name),
                format!("{}/{name}", dst_typed.trim_end_matches('/')),
            )
        } else {
            (dst_path.clone(), dst_typed.to_string())
        };
        if src_path == target_path {
            ex.raw_error(format!(
                "mv: '{src_typed}' and '{shown_target}' are the same file"
            ));
            continue;
        }
        if src_is_dir && is_ancestor_or_self(&src_path, &target_path) {
            ex.raw_error(format!(
                "mv: cannot move '{src_typed}' to a subdirectory of itself, '{shown_target}'"
            ));
            continue;
        }
        match ex.state.lookup(&target_path) {
            Some(t) if t.is_dir() && !src_is_dir => {
                ex.raw_error(format!(
                    "mv: cannot overwrite directory '{shown_target}' with non-directory"
                ));
                continue;
            }
            Some(t) if !t.is_dir() && src_is_dir => {
                ex.raw_error(format!(
                    "mv: cannot overwrite non-directory '{shown_target}' with directory '{src_typed}'"
                ));
                continue;
            }
            Some(t) if t.is_dir() && !t.children.is_empty() => {
                ex.raw_error(format!(
                    "mv: cannot move '{src_typed}' to '{shown_target}': Directory not empty"
                ));
                continue;
            }
            _ => {}
        }
        let (dst_parent, dst_name) = split_parent(&target_path).expect("non-root");
        match ex.state.lookup(&dst_parent) {
            None => {
                ex.raw_error(format!(
                    "mv: cannot move '{src_typed}' to '{shown_target}': No such file or directory"
                ));
                continue;
            }
            Some(p) if !p.is_dir() => {
                ex.raw_error(format!(
                    "mv: failed to access '{shown_target}': Not a directory"
                ));
                continue;
            }
            Some(_) => {}
        }

        let now = ex.state.now();
        let (src_parent, src_name) = split_parent(&src_path).expect("non-root");
        let mut node = {
            let parent = ex.state.lookup_mut(&src_parent).expect("checked");
            let node = parent.children.remove(src_name).expect("checked");
            parent.mtime = now;
            node
        };
        node.name = dst_name.to_string();
        let parent = ex.state.lookup_mut(&dst_parent).expect("checked");
        parent.children.insert(dst_name.to_string(), node);
        parent.mtime = now;
        ex.changed = true;
    }
}

fn cmd_cp(ex: &mut Exec, args: &[String]) {
    let (flags, operands) = parse_flags(args, "rR").expect("checked");
    let recursive = flags.contains(&'r') || flags.contains(&'R');
    match operands.len() {
        0 => {
            ex.raw_error("cp: missing file operand\nTry 'cp --help' for more information.".into());
            return;
        }
        1 => {
            ex.raw_error(format!(
                "cp: missing destination file operand after '{}'\nTry 'cp --help' for more information.",
                operands[0]
            ));
            return;
        }
        _ => {}
    }
    let (sources, dst_typed) = operands.split_at(operands.len() - 1);
    let dst_typed = dst_typed[0];
    let dst_path = normalize(ex.state.cwd(), dst_typed);
    let dst_is_dir = matches!(ex.state.lookup(&dst_path), Some(n) if n.is_dir());
    if sources.len() > 1 && !dst_is_dir {
        ex.raw_error(format!("cp: target '{dst_typed}' is not a directory"));
        return;
    }

    for src_typed in sources {
        let src_path = normalize(ex.state.cwd(), src_typed);
        let Some(src_node) = ex.state.lookup(&src_path) else {
            ex.error("cp", "no_such_file", src_typed);
            continue;
        };
        if src_node.is_dir() && !recursive {
            ex.error("cp", "omitting_directory", src_typed);
            continue;
        }
        let src_is_dir = src_node.is_dir();
        let src_clone = src_node.clone();
        let (target_path, shown_target) = if dst_is_dir {
            let name = split_parent(&src_path).expect("non-root").1;
            (
                join_path(&dst_path, name),
                format!("{}/{name}", dst_typed.trim_end_matches('/')),
            )
        } else {
            (dst_path.clone(), dst_typed.to_string())
        };
        if src_path == target_path {
            ex.raw_error(format!(
                "cp: '{src_typed}' and '{shown_target}' are the same file"
            ));
            continue;
        }
        if src_is_dir && is_ancestor_or_self(&src_path, &target_path) {
            ex.raw_error(format!(
                "cp: cannot copy a directory, '{src_typed}', into itself, '{shown_target}'"
            ));
            continue;
        }
        match ex.state.lookup(&target_path) {
            Some(t) if t.is_dir() && !src_is_dir => {
                ex.raw_error(format!(
                    "cp: cannot overwrite directory '{shown_target}' with non-directory"
                ));
                continue;
            }
            Some(t) if !t.is_dir() && src_is_dir => {
                ex.raw_error(format!(
                    "cp: cannot overwrite non-directory '{shown_target}' with directory '{src_typed}'"
                ));
                continue;
            }
            _ => {}
        }

        let now = ex.state.now();
        let user = ex.state.session_user.clone();
        let (dst_parent_path, dst_name) = split_parent(&target_path).expect("non-root");
        match ex.state.lookup(&dst_parent_path) {
            None => {
                let what = if src_is_dir {
                    "directory"
                } else {
                    "regular file"
                };
                ex.raw_error(format!(
                    "cp: cannot create {what} '{shown_target}': No such file or directory"
                ));
                continue;
            }
            Some(p) if !p.is_dir() => {
                ex.raw_error(format!(
                    "cp: failed to access '{shown_target}': Not a directory"
                ));
                continue;
            }
            Some(_) => {}
        }
        let dst_parent = ex.state.lookup_mut(&dst_parent_path).expect("checked");
        if let Some(existing) = dst_parent.children.get_mut(dst_name) {
            if existing.is_file() && src_clone.is_file() {
                existing.content = src_clone.content.clone();
                existing.size = src_clone.size;
                existing.mtime = now;
                dst_parent.mtime = now;
                ex.changed = true;
                continue;
            }
            if existing.is_dir() && src_clone.is_dir() {
                merge_copy(existing, &src_clone, &user, now);
                dst_parent.mtime = now;
                ex.changed = true;
                continue;
            }
        }
        let mut copy = src_clone;
        stamp(&mut copy, &user, now);
        copy.name = dst_name.to_string();
        dst_parent.children.insert(dst_name.to_string(), copy);
        dst_parent.mtime = now;
        ex.changed = true;
    }
}

fn stamp(node: &mut VfsNode, owner: &str, now: i64) {
    node.owner = owner.to_string();
    node.mtime = now;
    for child in node.children.values_mut() {
        stamp(child, owner, now);
    }
}

/// `cp -r` onto an existing directory merges contents instead of replacing.
fn merge_copy(dst: &mut VfsNode, src: &VfsNode, owner: &str, now: i64) {
    for (name, child) in &src.children {
        match dst.children.get_mut(name) {
            Some(existing) if existing.is_dir() && child.is_dir() => {
                merge_copy(existing, child, owner, now);
            }
            Some(existing) if existing.is_file() && child.is_file() => {
                existing.content = child.content.clone();
                existing.size = child.size;
                existing.mtime = now;
            }
            _ => {
                let mut copy = child.clone();
                stamp(&mut copy, owner, now);
                dst.children.insert(name.clone(), copy);
            }
        }
    }
    dst.mtime = now;
}

fn cmd_cat(ex: &mut Exec, args: &[String]) {
    let (_, operands) = parse_flags(args, "").expect("checked");
    for typed in operands {
        match ex.state.lookup(typed) {
            None => ex.error("cat", "no_such_file", typed),
            Some(n) if n.is_dir() => ex.error("cat", "is_directory", typed),
            Some(n) => {
                if let Some(bytes) = &n.content {
                    ex.out.push_str(&String::from_utf8_lossy(bytes));
                }
                // Size-only stubs print nothing.
            }
        }
    }
}

fn cmd_echo(ex: &mut Exec, args: &[String]) {
    let mut newline = true;
    let mut rest = args;
    while let Some(first) = rest.first() {
        if first == "-n" {
            newline = false;
            rest = &rest[1..];
        } else {
            break;
        }
    }
    let joined: Vec<&str> = rest.iter().map(|s| s.as_str()).collect();
    ex.out.push_str(&joined.join(" "));
    if newline {
        ex.out.push('\n');
    }
}

// ---------------------------------------------------------------------------
// ls
// ---------------------------------------------------------------------------

fn cmd_ls(ex: &mut Exec, args: &[String]) {
    let (flags, operands) = parse_flags(args, "la").expect("checked");
    let long = flags.contains(&'l');
    let all = flags.contains(&'a');

    if operands.is_empty() {
        let cwd = ex.state.cwd().to_string();
        let block = list_directory(ex, &cwd, long, all);
        ex.out.push_str(&block);
        return;
    }

    let mut missing: Vec<&str> = Vec::new();
    let mut file_ops: Vec<&str> = Vec::new();
    let mut dir_ops: Vec<&str> = Vec::new();
    for typed in &operands {
        match ex.state.lookup(typed) {
            None => missing.push(typed),
            Some(n) if n.is_dir() => dir_ops.push(typed),
            Some(_) => file_ops.push(typed),
        }
    }
    // Missing operands are reported in argument order; listings sort.
    file_ops.sort_unstable();
    dir_ops.sort_unstable();

    for typed in missing {
        ex.error("ls", "no_such_file", typed);
        ex.exit = 2;
    }

    let with_headers = operands.len() > 1;
    let mut blocks: Vec<String> = Vec::new();
    if !file_ops.is_empty() {
        let mut block = String::new();
        if long {
            let rows: Vec<LongRow> = file_ops
                .iter()
                .map(|typed| long_row(ex.state.lookup(typed).unwrap(), typed, ex.state.now()))
                .collect();
            block.push_str(&render_long(&rows, false));
        } else {
            for typed in &file_ops {
                block.push_str(typed);
                block.push('\n');
            }
        }
        blocks.push(block);
    }
    for typed in &dir_ops {
        let mut block = String::new();
        if with_headers {
            block.push_str(&format!("{typed}:\n"));
        }
        let path = normalize(ex.state.cwd(), typed);
        block.push_str(&list_directory(ex, &path, long, all));
        blocks.push(block);
    }
    let joined = blocks.join("\n");
    ex.out.push_str(&joined);
}

fn list_directory(ex: &mut Exec, path: &str, long: bool, all: bool) -> String {
    let now = ex.state.now();
    let Some(dir) = ex.state.lookup(path) else {
        return String::new();
    };
    let mut names: Vec<&str> = dir
        .children
        .keys()
        .map(|s| s.as_str())
        .filter(|n| all || !n.starts_with('.'))
        .collect();
    if all {
        names.push(".");
        names.push("..");
    }
    names.sort_unstable();

    if !long {
        let mut out = String::new();
        for n in names {
            out.push_str(n);
            out.push('\n');
        }
        return out;
    }

    let parent_path = split_parent(path).map(|(p, _)| p);
    let mut rows: Vec<LongRow> = Vec::new();
    let mut total_blocks: u64 = 0;
    for name in names {
        let node = match name {
            "." => dir,
            ".." => parent_path
                .as_deref()
                .and_then(|p| ex.state.lookup(p))
                .unwrap_or(&ex.state.root),
            n => &dir.children[n],
        };
        total_blocks += blocks_1k(node);
        rows.push(long_row(node, name, now));
    }
    let mut out = format!("total {total_blocks}\n");
    out.push_str(&render_long(&rows, true));
    out
}

struct LongRow {
    mode: String,
    nlink: String,
    owner: String,
    group: String,
    size: String,
    date: String,
    name: String,
}

fn blocks_1k(node: &VfsNode) -> u64 {
    match node.kind {
        NodeKind::Directory => 4,
        _ => node.size.div_ceil(4096) * 4,
    }
}

fn long_row(node: &VfsNode, shown_name: &str, now: i64) -> LongRow {
    let (type_char, nlink) = match &node.kind {
        NodeKind::Directory => {
            let subdirs = node.children.values().filter(|c| c.is_dir()).count() as u64;
            ('d', 2 + subdirs)
        }
        NodeKind::File => ('-', 1),
        NodeKind::Symlink(_) => ('l', 1),
    };
    let name = match &node.kind {
        NodeKind::Symlink(target) => format!("{shown_name} -> {target}"),
        _ => shown_name.to_string(),
    };
    LongRow {
        mode: format!("{type_char}{}", mode_string(node.mode)),
        nlink: nlink.to_string(),
        owner: node.owner.clone(),
        group: node.owner.clone(),
        size: node.size.to_string(),
        date: ls_date(node.mtime, now),
        name,
    }
}

fn render_long(rows: &[LongRow], _in_dir: bool) -> String {
    let w = |f: fn(&LongRow) -> usize| rows.iter().map(f).max().unwrap_or(0);
    let nlink_w = w(|r| r.nlink.len());
    let owner_w = w(|r| r.owner.len());
    let group_w = w(|r| r.group.len());
    let size_w = w(|r| r.size.len());
    let mut out = String::new();
    for r in rows {
        out.push_str(&format!(
            "{} {:>nlink_w$} {:<owner_w$} {:<group_w$} {:>size_w$} {} {}\n",
            r.mode, r.nlink, r.owner, r.group, r.size, r.date, r.name
        ));
    }
    out
}

fn mode_string(mode: u32) -> String {
    let mut s = String::with_capacity(9);
    for shift in [6u32, 3, 0] {
        let bits = (mode >> shift) & 0o7;
        s.push(if bits & 0o4 != 0 { 'r' } else { '-' });
        s.push(if bits & 0o2 != 0 { 'w' } else { '-' });
        let x = bits & 0o1 != 0;
        let special = match shift {
            6 => mode & 0o4000 != 0,
            3 => mode & 0o2000 != 0,
            _ => mode & 0o1000 != 0,
        };
        s.push(match (special, x, shift) {
            (true, true, 0) => 't',
            (true, false, 0) => 'T',
            (true, true, _) => 's',
            (true, false, _) => 'S',
            (false, true, _) => 'x',
            (false, false, _) => '-',
        });
    }
    s
}

/// `Mmm dd HH:MM` for recent mtimes, `Mmm dd  yyyy` otherwise, with the day
/// space-padded: the GNU ls default.
fn ls_date(mtime: i64, now: i64) -> String {
    const SIX_MONTHS: i64 = 15_778_476;
    let c = civil_from_epoch(mtime);
    let month = MONTH_ABBREV[(c.month - 1) as usize];
    let recent = mtime > now - SIX_MONTHS && mtime < now + 3600;
    if recent {
        format!("{month} {:>2} {:02}:{:02}", c.day, c.hour, c.minute)
    } else {
        format!("{month} {:>2}  {}", c.day, c.year)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::samples::sample_profile;
    use crate::vfs::build_from_template;
    use alloc::vec;

    const TEMPLATE: &str = "\
/\td\t4096\t755\troot\t1700000000
/bin\td\t4096\t755\troot\t1700000000
/etc\td\t4096\t755\troot\t1700000000
/etc/hostname\tf\t6\t644\troot\t1700000000
/etc/passwd\tf\t1024\t644\troot\t1700000000
/home\td\t4096\t755\troot\t1700000000
/home/admin\td\t4096\t755\tadmin\t1700000000
/lib\tl:usr/lib\t7\t777\troot\t1700000000
/root\td\t4096\t700\troot\t1700000000
/root/.bashrc\tf\t3106\t644\troot\t1700000000
/tmp\td\t4096\t1777\troot\t1700000000
";

    fn setup() -> (VfsState, crate::profile::SystemProfile) {
        let profile = sample_profile();
        let mut state = build_from_template(TEMPLATE, &profile).unwrap();
        state.set_now(1_786_000_000);
        (state, profile)
    }

    fn run(
        state: &mut VfsState,
        profile: &crate::profile::SystemProfile,
        line: &[&str],
    ) -> NativeResult {
        let argv: Vec<String> = line.iter().map(|s| s.to_string()).collect();
        assert!(native_supports(&argv), "not native: {line:?}");
        let result = exec_native(state, profile, &argv);
        state.validate_tree().expect("tree invariants after op");
        result
    }

    #[test]
    fn cd_then_pwd_reflects_state() {
        let (mut state, profile) = setup();
        let r = run(&mut state, &profile, &["cd", "/tmp"]);
        assert_eq!(r.exit_code, 0);
        assert_eq!(r.stdout, "");
        let r = run(&mut state, &profile, &["pwd"]);
        assert_eq!(r.stdout, "/tmp\n");
    }

    #[test]
    fn cd_errors_match_bash() {
        let (mut state, profile) = setup();
        let r = run(&mut state, &profile, &["cd", "/nonexistent"]);
        assert_eq!(
            r.stderr,
            "bash: cd: /nonexistent: No such file or directory\n"
        );
        assert_eq!(r.exit_code, 1);
        let r = run(&mut state, &profile, &["cd", "/etc/passwd"]);
        assert_eq!(r.stderr, "bash: cd: /etc/passwd: Not a directory\n");
        let r = run(&mut state, &profile, &["cd", "a", "b"]);
        assert_eq!(r.stderr, "bash: cd: too many arguments\n");
        // Failed cd leaves cwd alone.
        assert_eq!(state.cwd(), "/root");
        let r = run(&mut state, &profile, &["cd"]);
        assert_eq!(r.exit_code, 0);
        assert_eq!(state.cwd(), "/root");
    }

    #[test]
    fn cat_missing_file_matches_real_shell() {
        let (mut state, profile) = setup();
        let r = run(&mut state, &profile, &["cat", "/nonexistent"]);
        assert_eq!(r.stdout, "");
        assert_eq!(r.stderr, "cat: /nonexistent: No such file or directory\n");
        assert_eq!(r.exit_code, 1);
        let r = run(&mut state, &profile, &["cat", "/etc"]);
        assert_eq!(r.stderr, "cat: /etc: Is a directory\n");
    }

    #[test]
    fn cat_serves_attached_content_in_arg_order() {
        let (mut state, profile) = setup();
        state
            .attach_content("/etc/hostname", b"svr04\n".to_vec())
            .unwrap();
        let r = run(
            &mut state,
            &profile,
            &["cat", "/etc/hostname", "/etc/hostname"],
        );
        assert_eq!(r.stdout, "svr04\nsvr04\n");
        // Stub without content prints nothing but succeeds.
        let r = run(&mut state, &profile, &["cat", "/etc/passwd"]);
        assert_eq!((r.stdout.as_str(), r.exit_code), ("", 0));
    }

    #[test]
    fn mkdir_then_ls_shows_the_directory() {
        let (mut state, profile) = setup();
        run(&mut state, &profile, &["mkdir", "/tmp/x"]);
        let r = run(&mut state, &profile, &["ls", "/tmp"]);
        assert_eq!(r.stdout, "x\n");
        let r = run(&mut state, &profile, &["mkdir", "/tmp/x"]);
        assert_eq!(
            r.stderr,
            "mkdir: cannot create directory '/tmp/x': File exists\n"
        );
        let r = run(&mut state, &profile, &["mkdir", "/tmp/a/b/c"]);
        assert_eq!(
            r.stderr,
            "mkdir: cannot create directory '/tmp/a/b/c': No such file or directory\n"
        );
        let r = run(&mut state, &profile, &["mkdir", "-p", "/tmp/a/b/c"]);
        assert_eq!(r.exit_code, 0);
        assert!(state.lookup("/tmp/a/b/c").unwrap().is_dir());
    }

    #[test]
    fn ls_plain_sorts_and_hides_dotfiles() {
        let (mut state, profile) = setup();
        let r = run(&mut state, &profile, &["ls", "/root"]);
        assert_eq!(r.stdout, "");
        let r = run(&mut state, &profile, &["ls", "-a", "/root"]);
        assert_eq!(r.stdout, ".\n..\n.bashrc\n");
        let r = run(&mut state, &profile, &["ls", "/"]);
        assert_eq!(r.stdout, "bin\netc\nhome\nlib\nroot\ntmp\n");
    }

    #[test]
    fn ls_file_operand_echoes_typed_path() {
        let (mut state, profile) = setup();
        let r = run(&mut state, &profile, &["ls", "/etc/passwd"]);
        assert_eq!(r.stdout, "/etc/passwd\n");
        let r = run(&mut state, &profile, &["ls", "/nope"]);
        assert_eq!(
            r.stderr,
            "ls: cannot access '/nope': No such file or directory\n"
        );
        assert_eq!(r.exit_code, 2);
    }

    #[test]
    fn ls_multiple_operands_with_headers() {
        let (mut state, profile) = setup();
        run(&mut state, &profile, &["mkdir", "/tmp/m1"]);
        run(&mut state, &profile, &["touch", "/tmp/m1/a", "/tmp/m1/b"]);
        let r = run(
            &mut state,
            &profile,
            &["ls", "/tmp/m1", "/etc/passwd", "/etc"],
        );
        assert_eq!(
            r.stdout,
            "/etc/passwd\n\n/etc:\nhostname\npasswd\n\n/tmp/m1:\na\nb\n"
        );
    }

    #[test]
    fn ls_long_format_shape() {
        let (mut state, profile) = setup();
        state.set_now(1_786_195_526);
        let r = run(&mut state, &profile, &["ls", "-l", "/etc"]);
        let lines: Vec<&str> = r.stdout.lines().collect();
        assert_eq!(lines[0], "total 8");
        assert_eq!(
            lines[1],
            "-rw-r--r-- 1 root root    6 Nov 14  2023 hostname"
        );
        assert_eq!(lines[2], "-rw-r--r-- 1 root root 1024 Nov 14  2023 passwd");
        // Symlink rendering.
        let r = run(&mut state, &profile, &["ls", "-l", "/lib"]);
        assert_eq!(
            r.stdout,
            "lrwxrwxrwx 1 root root 7 Nov 14  2023 /lib -> usr/lib\n"
        );
    }

    #[test]
    fn touch_creates_and_updates() {
        let (mut state, profile) = setup();
        run(&mut state, &profile, &["touch", "/tmp/f"]);
        let created = state.lookup("/tmp/f").unwrap();
        assert_eq!(created.size, 0);
        assert_eq!(created.mtime, 1_786_000_000);
        state.set_now(1_786_000_100);
        run(&mut state, &profile, &["touch", "/tmp/f"]);
        assert_eq!(state.lookup("/tmp/f").unwrap().mtime, 1_786_000_100);
        let r = run(&mut state, &profile, &["touch", "/nodir/f"]);
        assert_eq!(
            r.stderr,
            "touch: cannot touch '/nodir/f': No such file or directory\n"
        );
    }

    #[test]
    fn rm_semantics_and_cwd_guard() {
        let (mut state, profile) = setup();
        run(&mut state, &profile, &["touch", "/tmp/f"]);
        let r = run(&mut state, &profile, &["rm", "/tmp/f"]);
        assert_eq!(r.exit_code, 0);
        assert!(state.lookup("/tmp/f").is_none());

        let r = run(&mut state, &profile, &["rm", "/tmp/f"]);
        assert_eq!(
            r.stderr,
            "rm: cannot remove '/tmp/f': No such file or directory\n"
        );
        let r = run(&mut state, &profile, &["rm", "-f", "/tmp/f"]);
        assert_eq!((r.exit_code, r.stderr.as_str()), (0, ""));

        run(&mut state, &profile, &["mkdir", "/tmp/d"]);
        let r = run(&mut state, &profile, &["rm", "/tmp/d"]);
        assert_eq!(r.stderr, "rm: cannot remove '/tmp/d': Is a directory\n");
        let r = run(&mut state, &profile, &["rm", "-r", "/tmp/d"]);
        assert_eq!(r.exit_code, 0);

        // The cwd and its ancestors are protected.
        run(&mut state, &profile, &["cd", "/tmp"]);
        let r = run(&mut state, &profile, &["rm", "-rf", "/tmp"]);
        assert_eq!(r.stderr, "rm: cannot remove '/tmp': Permission denied\n");
        let r = run(&mut state, &profile, &["rm", "-rf", "/"]);
        assert_eq!(r.stderr, "rm: cannot remove '/': Permission denied\n");
        assert!(state.lookup("/tmp").is_some());
    }

    #[test]
    fn mv_renames_moves_and_guards() {
        let (mut state, profile) = setup();
        run(&mut state, &profile, &["touch", "/tmp/a"]);
        let r = run(&mut state, &profile, &["mv", "/tmp/a", "/tmp/b"]);
        assert_eq!(r.exit_code, 0);
        assert!(state.lookup("/tmp/a").is_none());
        assert!(state.lookup("/tmp/b").is_some());

        run(&mut state, &profile, &["mkdir", "/tmp/d"]);
        run(&mut state, &profile, &["mv", "/tmp/b", "/tmp/d"]);
        assert!(state.lookup("/tmp/d/b").is_some());

        let r = run(&mut state, &profile, &["mv", "/tmp/missing", "/tmp/x"]);
        assert_eq!(
            r.stderr,
            "mv: cannot stat '/tmp/missing': No such file or directory\n"
        );

        let r = run(&mut state, &profile, &["mv", "/tmp/d"]);
        assert_eq!(
            r.stderr,
            "mv: missing destination file operand after '/tmp/d'\nTry 'mv --help' for more information.\n"
        );

        let r = run(&mut state, &profile, &["mv", "/tmp/d", "/tmp/d/sub"]);
        assert_eq!(
            r.stderr,
            "mv: cannot move '/tmp/d' to a subdirectory of itself, '/tmp/d/sub'\n"
        );
    }

    #[test]
    fn cp_copies_and_guards() {
        let (mut state, profile) = setup();
        state
            .attach_content("/etc/hostname", b"svr04\n".to_vec())
            .unwrap();
        let r = run(&mut state, &profile, &["cp", "/etc/hostname", "/tmp/h"]);
        assert_eq!(r.exit_code, 0);
        let copy = state.lookup("/tmp/h").unwrap();
        assert_eq!(copy.content.as_deref(), Some(b"svr04\n".as_slice()));
        assert_eq!(copy.mtime, 1_786_000_000);

        let r = run(&mut state, &profile, &["cp", "/etc", "/tmp/etc2"]);
        assert_eq!(
            r.stderr,
            "cp: -r not specified; omitting directory '/etc'\n"
        );
        let r = run(&mut state, &profile, &["cp", "-r", "/etc", "/tmp/etc2"]);
        assert_eq!(r.exit_code, 0);
        assert!(state.lookup("/tmp/etc2/passwd").is_some());

        let r = run(&mut state, &profile, &["cp", "/tmp/h", "/tmp/h"]);
        assert_eq!(r.stderr, "cp: '/tmp/h' and '/tmp/h' are the same file\n");

        run(&mut state, &profile, &["mkdir", "/tmp/dd"]);
        let r = run(&mut state, &profile, &["cp", "-r", "/tmp/dd", "/tmp/dd"]);
        assert_eq!(
            r.stderr,
            "cp: cannot copy a directory, '/tmp/dd', into itself, '/tmp/dd/dd'\n"
        );
    }

    #[test]
    fn echo_and_identity_commands() {
        let (mut state, profile) = setup();
        let r = run(&mut state, &profile, &["echo", "hello", "world"]);
        assert_eq!(r.stdout, "hello world\n");
        let r = run(&mut state, &profile, &["echo", "-n", "hi"]);
        assert_eq!(r.stdout, "hi");
        let r = run(&mut state, &profile, &["echo"]);
        assert_eq!(r.stdout, "\n");
        let r = run(&mut state, &profile, &["whoami"]);
        assert_eq!(r.stdout, "root\n");
        let r = run(&mut state, &profile, &["hostname"]);
        assert_eq!(r.stdout, "svr04\n");
    }

    #[test]
    fn native_supports_whitelist() {
        let sup = |line: &[&str]| {
            native_supports(&line.iter().map(|s| s.to_string()).collect::<Vec<_>>())
        };
        assert!(sup(&["ls", "-la", "/tmp"]));
        assert!(sup(&["rm", "-rf", "x"]));
        assert!(sup(&["mkdir", "-p", "a/b"]));
        assert!(sup(&["echo", "-n", "hi"]));
        assert!(!sup(&["ls", "-ltr"]));
        assert!(!sup(&["ls", "--color"]));
        assert!(!sup(&["cat"]));
        assert!(!sup(&["cat", "-n", "f"]));
        assert!(!sup(&["pwd", "-P"]));
        assert!(!sup(&["uname", "-a"]));
        assert!(!sup(&["echo", "-e", "x"]));
        assert!(sup(&["cd"]));
        assert!(sup(&["cd", "/tmp"]));
    }

    #[test]
    fn relative_paths_resolve_against_cwd() {
        let (mut state, profile) = setup();
        run(&mut state, &profile, &["cd", "/tmp"]);
        run(&mut state, &profile, &["mkdir", "work"]);
        run(&mut state, &profile, &["cd", "work"]);
        run(&mut state, &profile, &["touch", "notes.txt"]);
        let r = run(&mut state, &profile, &["ls"]);
        assert_eq!(r.stdout, "notes.txt\n");
        let r = run(&mut state, &profile, &["pwd"]);
        assert_eq!(r.stdout, "/tmp/work\n");
        run(&mut state, &profile, &["cd", ".."]);
        let r = run(&mut state, &profile, &["pwd"]);
        assert_eq!(r.stdout, "/tmp\n");
    }

    #[test]
    fn random_sequences_preserve_invariants() {
        // 200 pseudorandom mutation sequences; after every op the tree
        // walker revalidates and cwd stays a live directory.
        let (state0, profile) = setup();
        let mut rng: u64 = 0xD1F7;
        let mut next = move || {
            rng = rng.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = rng;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^ (z >> 31)
        };
        let dirs = ["/tmp", "/tmp/w", "/root", "/", "..", ".", "w", "x"];
        let names = ["a", "b", "c", "w/x", "/tmp/w/y", ".hidden"];
        for _ in 0..200 {
            let mut state = state0.clone();
            for _ in 0..30 {
                let argv: Vec<String> = match next() % 8 {
                    0 => vec!["cd".into(), dirs[(next() % 8) as usize].into()],
                    1 => vec![
                        "mkdir".into(),
                        "-p".into(),
                        names[(next() % 6) as usize].into(),
                    ],
                    2 => vec!["touch".into(), names[(next() % 6) as usize].into()],
                    3 => vec![
                        "rm".into(),
                        if next() % 2 == 0 {
                            "-r".into()
                        } else {
                            "-rf".into()
                        },
                        names[(next() % 6) as usize].into(),
                    ],
                    4 => vec![
                        "mv".into(),
                        names[(next() % 6) as usize].into(),
                        names[(next() % 6) as usize].into(),
                    ],
                    5 => vec![
                        "cp".into(),
                        "-r".into(),
                        names[(next() % 6) as usize].into(),
                        names[(next() % 6) as usize].into(),
                    ],
                    6 => vec!["ls".into(), "-la".into()],
                    _ => vec!["pwd".into()],
                };
                let _ = exec_native(&mut state, &profile, &argv);
                state.validate_tree().expect("invariants must hold");
            }
        }
    }
}
