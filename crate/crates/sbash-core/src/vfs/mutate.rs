//! Per-session pseudorandom template mutation.
//!
//! A template by itself is a fingerprint: every session would present
//! byte-identical sizes and dates. `mutate` perturbs the realism-bearing
//! surface deterministically from a seed:
//!
//! * sizes of content-less file stubs jitter by up to ±20%,
//! * file mtimes move back by up to 90 days,
//! * 0-3 decoy files appear under `/tmp` and each `/home/*`.
//!
//! Template nodes are never removed, files with attached content keep their
//! size (the `size == content length` invariant holds), and the same
//! `(state, seed)` pair always produces the same tree.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{NodeKind, VfsNode, VfsState};

/// SplitMix64: tiny, portable, and stable across platforms, which is what
/// seed-reproducible sessions need.
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform value in `0..n` (n > 0).
    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }
}

const NINETY_DAYS: i64 = 90 * 86_400;

const DECOY_NAMES: [&str; 10] = [
    ".bash_history",
    ".lesshst",
    ".viminfo",
    ".wget-hsts",
    "backup.tar.gz",
    "data.db",
    "dump.sql",
    "install.log",
    "notes.txt",
    "todo.txt",
];

/// Apply the seeded mutation pass described in the module docs.
pub fn mutate(state: &mut VfsState, seed: u64) {
    let mut rng = SplitMix64::new(seed);

    // Pass 1: jitter file stubs. BTreeMap iteration makes the visit order,
    // and therefore the RNG stream, deterministic.
    fn jitter(node: &mut VfsNode, rng: &mut SplitMix64) {
        if matches!(node.kind, NodeKind::File) {
            if node.content.is_none() {
                // 80%..=120% of the captured size.
                node.size = node.size * (80 + rng.below(41)) / 100;
            }
            node.mtime -= rng.below(NINETY_DAYS as u64) as i64;
        }
        for child in node.children.values_mut() {
            jitter(child, rng);
        }
    }
    jitter(&mut state.root, &mut rng);

    // Pass 2: decoy files under /tmp and each /home/<user>.
    let mut targets: Vec<String> = Vec::new();
    if matches!(state.lookup("/tmp"), Some(n) if n.is_dir()) {
        targets.push("/tmp".to_string());
    }
    if let Some(home) = state.lookup("/home") {
        for (name, child) in &home.children {
            if child.is_dir() {
                targets.push(alloc::format!("/home/{name}"));
            }
        }
    }
    for target in targets {
        let count = rng.below(4);
        for _ in 0..count {
            let name = DECOY_NAMES[rng.below(DECOY_NAMES.len() as u64) as usize];
            let size = rng.below(65_536);
            let age = rng.below(NINETY_DAYS as u64) as i64;
            let dir = state
                .lookup_mut(&target)
                .expect("target directory collected above");
            if dir.children.contains_key(name) {
                continue;
            }
            let owner = dir.owner.clone();
            let mtime = dir.mtime - age;
            dir.children.insert(
                name.to_string(),
                VfsNode::file(name, &owner, 0o644, mtime, size),
            );
        }
    }
}
