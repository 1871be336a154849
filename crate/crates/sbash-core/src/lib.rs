//! Core of the sbash shell honeypot.
//!
//! Everything in this crate is transport-free and deterministic: the system
//! profile, the virtual filesystem, the command pipeline
//! (sanitize -> classify -> native or LLM execution), the knowledge index,
//! and the evaluation metrics. Network backends, file formats, and the CLI
//! live in the companion `sbash` crate; they plug in through the
//! [`clock::Clock`], [`genclient::ChatBackend`], and
//! [`knowledge::EmbeddingProvider`] traits.
//!
//! The crate is `no_std` (with `alloc`) so the pipeline never touches IO;
//! anything that needs a wall clock, a network, or a filesystem is injected.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod clock;
pub mod dispatch;
pub mod genclient;
pub mod knowledge;
pub mod metrics;
pub mod profile;
pub mod report;
pub mod timefmt;
pub mod vfs;

pub use clock::Clock;
pub use profile::SystemProfile;
