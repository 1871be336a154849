//! Knowledge-base ingestion from disk and vector-store serialization.
//!
//! The knowledge source directory holds one UTF-8 text file per command,
//! named after the command (an optional `.txt` extension is tolerated and
//! stripped). The serialized store is a single JSON document.

use std::path::Path;

use sbash_core::knowledge::{
    chunk_document, index, EmbeddingProvider, KnowledgeChunk, VectorStore,
};

pub const DEFAULT_CHUNK_SIZE: usize = 512;
pub const DEFAULT_OVERLAP: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum StoreFsError {
    #[error("knowledge source directory {0} holds no documents")]
    EmptyCorpus(String),
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse store {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("cannot write store {path}: {source}")]
    Write {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Knowledge(#[from] sbash_core::knowledge::KnowledgeError),
}

/// Read every document in `source_dir` and split it into chunks. Files are
/// visited in name order, so the chunk list is deterministic.
pub fn ingest_dir(
    source_dir: impl AsRef<Path>,
    chunk_size: usize,
    overlap: usize,
) -> Result<Vec<KnowledgeChunk>, StoreFsError> {
    let source_dir = source_dir.as_ref();
    let mut entries: Vec<std::path::PathBuf> = std::fs::read_dir(source_dir)
        .map_err(|source| StoreFsError::Unreadable {
            path: source_dir.display().to_string(),
            source,
        })?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
        .map(|e| e.path())
        .collect();
    entries.sort();

    let mut chunks = Vec::new();
    for path in entries {
        let text = std::fs::read_to_string(&path).map_err(|source| StoreFsError::Unreadable {
            path: path.display().to_string(),
            source,
        })?;
        let command = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        if command.is_empty() || text.is_empty() {
            continue;
        }
        chunks.extend(chunk_document(
            &command,
            &path.to_string_lossy(),
            &text,
            chunk_size,
            overlap,
        )?);
    }
    if chunks.is_empty() {
        return Err(StoreFsError::EmptyCorpus(source_dir.display().to_string()));
    }
    Ok(chunks)
}

/// Ingest, embed, and index a knowledge directory in one step.
pub fn build_store(
    source_dir: impl AsRef<Path>,
    chunk_size: usize,
    overlap: usize,
    provider: &dyn EmbeddingProvider,
) -> Result<VectorStore, StoreFsError> {
    let chunks = ingest_dir(source_dir, chunk_size, overlap)?;
    Ok(index(chunks, provider)?)
}

pub fn save_store(path: impl AsRef<Path>, store: &VectorStore) -> Result<(), StoreFsError> {
    let path = path.as_ref();
    let json = serde_json::to_string(store).expect("store serializes");
    std::fs::write(path, json).map_err(|source| StoreFsError::Write {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_store(path: impl AsRef<Path>) -> Result<VectorStore, StoreFsError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| StoreFsError::Unreadable {
        path: path.display().to_string(),
        source,
    })?;
    let store: VectorStore = serde_json::from_str(&text).map_err(|source| StoreFsError::Parse {
        path: path.display().to_string(),
        source,
    })?;
    // Re-validate invariants on the way in.
    Ok(VectorStore::from_entries(store.entries().to_vec())?)
}
