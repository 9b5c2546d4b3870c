//! Command-line front end and JSON service for a grant knowledge base.

pub mod commands;
pub mod server;

use std::path::PathBuf;

pub const KB_ENV: &str = "G4C_KB";

/// The knowledge-base directory: `G4C_KB` if set, otherwise `flag`.
pub fn resolve_kb_path(flag: PathBuf) -> PathBuf {
    match std::env::var_os(KB_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => flag,
    }
}
