//! Knowledge base: documentation chunks, embeddings, and the cosine index
//! that backs retrieval-augmented generation.
//!
//! Per-command documentation (man pages, `-h` output) is split into
//! overlapping chunks, embedded, and searched with exact cosine similarity.
//! The corpus is small (hundreds of documents), so the index is a flat scan;
//! exactness matters more than speed here and the scan doubles as its own
//! reference implementation.
//!
//! Embedding is behind the [`EmbeddingProvider`] trait. [`MockEmbedder`] is
//! the deterministic in-process provider (hashed character trigrams,
//! L2-normalized) used by tests and offline runs; the companion crate adds
//! an HTTP provider with the same contract.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Errors from embedding providers.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding contains a non-finite value")]
    NonFinite,
}

/// Errors from chunking, indexing, and retrieval.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum KnowledgeError {
    #[error("chunk overlap ({overlap}) must be smaller than chunk size ({chunk_size})")]
    BadChunkParams { chunk_size: usize, overlap: usize },
    #[error("duplicate chunk id: {0}")]
    DuplicateChunkId(String),
    #[error("no chunks to index")]
    NoChunks,
    #[error("vector store is empty")]
    EmptyStore,
    #[error("retrieval k must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// A fixed-length embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn norm(&self) -> f64 {
        libm::sqrt(self.values.iter().map(|v| v * v).sum())
    }
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a
        .values
        .iter()
        .zip(b.values.iter())
        .map(|(x, y)| x * y)
        .sum();
    dot / (na * nb)
}

/// Anything that can turn text into vectors of a fixed dimension.
pub trait EmbeddingProvider {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;

    /// Batch form; providers with a wire protocol override this to send one
    /// request. The default loops over [`EmbeddingProvider::embed`].
    fn embed_many(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }

    fn dim(&self) -> usize;
}

/// Deterministic offline embedder: counts hashed character trigrams into
/// `dim` buckets and L2-normalizes. Texts shorter than three characters
/// contribute themselves as a single feature; the empty text embeds to the
/// zero vector.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    dim: usize,
}

impl MockEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self::new(256)
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl EmbeddingProvider for MockEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut counts = alloc::vec![0.0f64; self.dim];
        let chars: Vec<char> = text.chars().collect();
        let mut bump = |feature: &str| {
            let bucket = (fnv1a64(feature.as_bytes()) % self.dim as u64) as usize;
            counts[bucket] += 1.0;
        };
        if chars.is_empty() {
            // zero vector
        } else if chars.len() < 3 {
            bump(text);
        } else {
            let mut buf = String::new();
            for w in chars.windows(3) {
                buf.clear();
                buf.extend(w);
                bump(&buf);
            }
        }
        let mut v = EmbeddingVector { values: counts };
        let n = v.norm();
        if n > 0.0 {
            for x in &mut v.values {
                *x /= n;
            }
        }
        Ok(v)
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

/// One bounded slice of a command's documentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeChunk {
    /// `<command>#<byte offset>`, unique within a store.
    pub chunk_id: String,
    /// Command the source document describes.
    pub command: String,
    pub text: String,
    /// Originating file path (or other locator).
    pub source: String,
    /// `ceil(byte_length / 4)`, the crude token estimate used for sizing.
    pub token_estimate: usize,
}

pub fn estimate_tokens(text: &str) -> usize {
    text.len().div_ceil(4)
}

fn floor_char_boundary(text: &str, mut i: usize) -> usize {
    while i > 0 && !text.is_char_boundary(i) {
        i -= 1;
    }
    i
}

/// Split one document into chunks of at most `chunk_size` estimated tokens
/// with `overlap` estimated tokens shared between neighbours. Chunk ids
/// carry the starting byte offset, so the original document is exactly
/// reconstructable from the chunk list. An empty document yields no chunks.
pub fn chunk_document(
    command: &str,
    source: &str,
    text: &str,
    chunk_size: usize,
    overlap: usize,
) -> Result<Vec<KnowledgeChunk>, KnowledgeError> {
    if chunk_size == 0 || overlap >= chunk_size {
        return Err(KnowledgeError::BadChunkParams {
            chunk_size,
            overlap,
        });
    }
    let chunk_bytes = chunk_size * 4;
    let overlap_bytes = overlap * 4;

    let mut chunks = Vec::new();
    let mut start = 0usize;
    while start < text.len() {
        let mut end = floor_char_boundary(text, (start + chunk_bytes).min(text.len()));
        if end <= start {
            // A single scalar value is at most 4 bytes, and chunk_bytes >= 4.
            end = text.len();
        }
        let slice = &text[start..end];
        chunks.push(KnowledgeChunk {
            chunk_id: alloc::format!("{command}#{start:08}"),
            command: String::from(command),
            text: String::from(slice),
            source: String::from(source),
            token_estimate: estimate_tokens(slice),
        });
        if end == text.len() {
            break;
        }
        let mut next = floor_char_boundary(text, end.saturating_sub(overlap_bytes));
        if next <= start {
            next = end;
        }
        start = next;
    }
    Ok(chunks)
}

/// Flat cosine index over embedded chunks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorStore {
    entries: Vec<StoreEntry>,
    dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreEntry {
    pub chunk: KnowledgeChunk,
    pub vector: EmbeddingVector,
}

/// A retrieval hit.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub chunk: KnowledgeChunk,
    pub score: f64,
}

impl VectorStore {
    pub fn entries(&self) -> &[StoreEntry] {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Rebuild from deserialized parts, re-checking the invariants.
    pub fn from_entries(entries: Vec<StoreEntry>) -> Result<Self, KnowledgeError> {
        if entries.is_empty() {
            return Err(KnowledgeError::NoChunks);
        }
        let dim = entries[0].vector.dim();
        let mut seen = BTreeSet::new();
        for e in &entries {
            if e.vector.dim() != dim {
                return Err(EmbedError::DimensionMismatch {
                    expected: dim,
                    got: e.vector.dim(),
                }
                .into());
            }
            if !e.vector.is_finite() {
                return Err(EmbedError::NonFinite.into());
            }
            if !seen.insert(e.chunk.chunk_id.clone()) {
                return Err(KnowledgeError::DuplicateChunkId(e.chunk.chunk_id.clone()));
            }
        }
        Ok(Self { entries, dim })
    }
}

/// Embed every chunk and build the store.
pub fn index(
    chunks: Vec<KnowledgeChunk>,
    provider: &dyn EmbeddingProvider,
) -> Result<VectorStore, KnowledgeError> {
    if chunks.is_empty() {
        return Err(KnowledgeError::NoChunks);
    }
    let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
    let vectors = provider.embed_many(&texts)?;
    let entries = chunks
        .into_iter()
        .zip(vectors)
        .map(|(chunk, vector)| StoreEntry { chunk, vector })
        .collect();
    VectorStore::from_entries(entries)
}

/// Top-`k` chunks by cosine similarity to the query, descending; ties break
/// by ascending `chunk_id`.
pub fn retrieve(
    store: &VectorStore,
    query: &str,
    k: usize,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<Scored>, KnowledgeError> {
    if k == 0 {
        return Err(KnowledgeError::InvalidK);
    }
    if store.is_empty() {
        return Err(KnowledgeError::EmptyStore);
    }
    let q = provider.embed(query)?;
    let mut scored: Vec<Scored> = store
        .entries
        .iter()
        .map(|e| Scored {
            chunk: e.chunk.clone(),
            score: cosine(&q, &e.vector),
        })
        .collect();
    scored.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.chunk.chunk_id.cmp(&b.chunk.chunk_id))
    });
    scored.truncate(k);
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;
    use alloc::string::ToString;

    fn chunk(id: &str, text: &str) -> KnowledgeChunk {
        KnowledgeChunk {
            chunk_id: id.to_string(),
            command: id.split('#').next().unwrap().to_string(),
            text: text.to_string(),
            source: format!("{id}.src"),
            token_estimate: estimate_tokens(text).max(1),
        }
    }

    #[test]
    fn mock_embed_is_deterministic_and_normalized() {
        let mock = MockEmbedder::default();
        let a = mock.embed("ls").unwrap();
        let b = mock.embed("ls").unwrap();
        assert_eq!(a, b);
        assert!((cosine(&a, &b) - 1.0).abs() < 1e-9);
        assert!((a.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mock_embed_orders_related_texts() {
        let mock = MockEmbedder::default();
        let base = mock.embed("list files").unwrap();
        let near = mock.embed("list the files").unwrap();
        let far = mock.embed("delete files").unwrap();
        let sim_near = cosine(&base, &near);
        let sim_far = cosine(&base, &far);
        assert!(
            sim_far < sim_near,
            "expected {sim_far} < {sim_near} for unrelated vs related"
        );
    }

    #[test]
    fn empty_text_embeds_to_zero_vector() {
        let mock = MockEmbedder::default();
        let z = mock.embed("").unwrap();
        assert_eq!(z.norm(), 0.0);
        let v = mock.embed("anything").unwrap();
        assert_eq!(cosine(&z, &v), 0.0);
    }

    #[test]
    fn small_document_is_a_single_chunk() {
        // ~100 estimated tokens, well under the 512 limit.
        let text = "x".repeat(400);
        let chunks = chunk_document("ls", "kb/ls", &text, 512, 64).unwrap();
        assert_eq!(chunks.len(), 1);
        assert_eq!(chunks[0].text, text);
        assert_eq!(chunks[0].token_estimate, 100);
        assert_eq!(chunks[0].chunk_id, "ls#00000000");
    }

    #[test]
    fn chunks_reconstruct_the_document() {
        // Oracle: every chunk carries its byte offset; splicing each chunk
        // into a buffer at its offset must reproduce the document exactly
        // and leave no gaps.
        let text: String = (0..1000)
            .map(|i| format!("tok{i} "))
            .collect::<Vec<_>>()
            .join("");
        assert!(estimate_tokens(&text) > 512);
        let chunks = chunk_document("man", "kb/man", &text, 512, 64).unwrap();
        assert!(chunks.len() > 1);

        let mut rebuilt = alloc::vec![None::<u8>; text.len()];
        let mut prev_start = None;
        for c in &chunks {
            let offset: usize = c.chunk_id.split('#').nth(1).unwrap().parse().unwrap();
            assert_eq!(&text[offset..offset + c.text.len()], c.text);
            if let Some(p) = prev_start {
                assert!(offset > p, "chunks must advance");
            }
            prev_start = Some(offset);
            for (i, b) in c.text.bytes().enumerate() {
                rebuilt[offset + i] = Some(b);
            }
            assert!(c.token_estimate <= 512);
        }
        let rebuilt: Vec<u8> = rebuilt.into_iter().map(|b| b.expect("gap")).collect();
        assert_eq!(rebuilt, text.as_bytes());
    }

    #[test]
    fn chunk_params_validated() {
        assert!(matches!(
            chunk_document("c", "s", "text", 64, 64),
            Err(KnowledgeError::BadChunkParams { .. })
        ));
        assert!(matches!(
            chunk_document("c", "s", "text", 0, 0),
            Err(KnowledgeError::BadChunkParams { .. })
        ));
    }

    #[test]
    fn chunking_respects_utf8_boundaries() {
        let text = " période d'essai: définition complète: ".repeat(60);
        let chunks = chunk_document("doc", "s", &text, 16, 4).unwrap();
        let mut rebuilt = alloc::vec![None::<u8>; text.len()];
        for c in &chunks {
            let offset: usize = c.chunk_id.split('#').nth(1).unwrap().parse().unwrap();
            for (i, b) in c.text.bytes().enumerate() {
                rebuilt[offset + i] = Some(b);
            }
        }
        let rebuilt: Vec<u8> = rebuilt.into_iter().map(|b| b.expect("gap")).collect();
        assert_eq!(rebuilt, text.as_bytes());
    }

    #[test]
    fn index_counts_and_rejects_duplicates() {
        let mock = MockEmbedder::default();
        let chunks = alloc::vec![
            chunk("ls#0", "list directory contents"),
            chunk("cd#0", "change the shell working directory"),
            chunk("rm#0", "remove files or directories"),
        ];
        let store = index(chunks.clone(), &mock).unwrap();
        assert_eq!(store.len(), 3);
        assert_eq!(store.dim(), 256);

        let again = index(chunks.clone(), &mock).unwrap();
        assert_eq!(store, again);

        let mut dup = chunks;
        dup.push(chunk("ls#0", "duplicate"));
        assert!(matches!(
            index(dup, &mock),
            Err(KnowledgeError::DuplicateChunkId(_))
        ));
    }

    #[test]
    fn stored_vectors_are_self_similar() {
        let mock = MockEmbedder::default();
        let chunks: Vec<_> = (0..10)
            .map(|i| chunk(&format!("c{i}#0"), &format!("document body number {i}")))
            .collect();
        let store = index(chunks, &mock).unwrap();
        for e in store.entries() {
            assert!((cosine(&e.vector, &e.vector) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn retrieve_self_query_ranks_first_with_unit_score() {
        let mock = MockEmbedder::default();
        let chunks = alloc::vec![
            chunk("ls#0", "list directory contents and file names"),
            chunk("rm#0", "remove files or directories permanently"),
            chunk("cd#0", "change the current working directory"),
        ];
        let store = index(chunks, &mock).unwrap();
        let hits = retrieve(&store, "list directory contents and file names", 1, &mock).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].chunk.chunk_id, "ls#0");
        assert!((hits[0].score - 1.0).abs() < 1e-9);
    }

    #[test]
    fn retrieve_k_larger_than_store_returns_all_sorted() {
        let mock = MockEmbedder::default();
        let chunks = alloc::vec![
            chunk("a#0", "alpha"),
            chunk("b#0", "bravo"),
            chunk("c#0", "charlie"),
        ];
        let store = index(chunks, &mock).unwrap();
        let hits = retrieve(&store, "alpha", 10, &mock).unwrap();
        assert_eq!(hits.len(), 3);
        for w in hits.windows(2) {
            assert!(w[0].score >= w[1].score);
        }
    }

    #[test]
    fn retrieve_matches_bruteforce_full_sort() {
        // Oracle: full sort of every chunk by (score desc, id asc), sliced.
        let mock = MockEmbedder::default();
        let words = [
            "list", "remove", "copy", "move", "print", "network", "socket", "user", "group",
            "kernel",
        ];
        let chunks: Vec<_> = (0..50)
            .map(|i| {
                let text = format!(
                    "{} {} {} documentation body",
                    words[i % words.len()],
                    words[(i * 3 + 1) % words.len()],
                    words[(i * 7 + 2) % words.len()]
                );
                chunk(&format!("cmd{i:02}#0"), &text)
            })
            .collect();
        let store = index(chunks.clone(), &mock).unwrap();

        let mut state = 0xFEED_u64;
        let mut next = move || {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            z ^ (z >> 31)
        };
        for _ in 0..100 {
            let q = format!(
                "{} {} query",
                words[(next() % 10) as usize],
                words[(next() % 10) as usize]
            );
            let qv = mock.embed(&q).unwrap();
            let mut oracle: Vec<(String, f64)> = chunks
                .iter()
                .map(|c| {
                    let v = mock.embed(&c.text).unwrap();
                    (c.chunk_id.clone(), cosine(&qv, &v))
                })
                .collect();
            oracle.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

            let hits = retrieve(&store, &q, 5, &mock).unwrap();
            let got: Vec<&str> = hits.iter().map(|h| h.chunk.chunk_id.as_str()).collect();
            let want: Vec<&str> = oracle.iter().take(5).map(|(id, _)| id.as_str()).collect();
            assert_eq!(got, want, "query {q:?}");
        }
    }

    #[test]
    fn retrieve_rejects_bad_inputs() {
        let mock = MockEmbedder::default();
        let store = index(alloc::vec![chunk("a#0", "alpha")], &mock).unwrap();
        assert!(matches!(
            retrieve(&store, "q", 0, &mock),
            Err(KnowledgeError::InvalidK)
        ));
        assert!(matches!(
            index(Vec::new(), &mock),
            Err(KnowledgeError::NoChunks)
        ));
    }
}
