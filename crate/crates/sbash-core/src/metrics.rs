//! Output-similarity metrics for honeypot evaluation.
//!
//! Three scores compare a generated shell output (candidate) against the
//! output captured from a real system (reference):
//!
//! * character-level edit distance, normalized to a percentage,
//! * whole-text embedding cosine similarity,
//! * token-level greedy-matched embedding precision/recall/F1.
//!
//! All scores are percentages in `[0, 100]` and identical inputs score 100
//! under every metric. The embedding-based metrics take any
//! [`EmbeddingProvider`], so they work with the deterministic built-in
//! embedder as well as an external service.

use alloc::vec::Vec;

use crate::knowledge::{cosine, EmbedError, EmbeddingProvider};

/// Minimum number of single-character insertions, deletions, and
/// substitutions turning `a` into `b`. Operates on Unicode scalar values.
pub fn levenshtein_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }

    // Single-row DP; `prev_diag` carries the d[i-1][j-1] cell.
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, &ca) in a.iter().enumerate() {
        let mut prev_diag = row[0];
        row[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let cost = if ca == cb { 0 } else { 1 };
            let next = (prev_diag + cost).min(row[j] + 1).min(row[j + 1] + 1);
            prev_diag = row[j + 1];
            row[j + 1] = next;
        }
    }
    row[b.len()]
}

/// Edit-distance similarity as a percentage:
/// `100 * (1 - distance / max(|candidate|, |reference|))`.
/// Two empty strings are identical by definition and score 100.
pub fn levenshtein_similarity(candidate: &str, reference: &str) -> f64 {
    let max_len = candidate.chars().count().max(reference.chars().count());
    if max_len == 0 {
        return 100.0;
    }
    let d = levenshtein_distance(candidate, reference);
    100.0 * (1.0 - d as f64 / max_len as f64)
}

/// Whole-text cosine similarity as a percentage, clamped at 0.
///
/// Identical texts score 100. If exactly one side is empty the score is 0;
/// two empty texts are identical and score 100.
pub fn sentence_cosine_similarity(
    candidate: &str,
    reference: &str,
    provider: &dyn EmbeddingProvider,
) -> Result<f64, EmbedError> {
    match (candidate.is_empty(), reference.is_empty()) {
        (true, true) => return Ok(100.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let c = provider.embed(candidate)?;
    let r = provider.embed(reference)?;
    let score = 100.0 * cosine(&c, &r).max(0.0);
    Ok(score.min(100.0))
}

/// Greedy token-matching precision/recall/F1, all percentages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenF1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Token-level embedding score: precision is the mean over candidate tokens
/// of the best cosine against any reference token, recall is the symmetric
/// quantity, and F1 is their harmonic mean. Tokens are whitespace-separated.
/// Two empty texts score 100; exactly one empty text scores 0.
pub fn token_f1(
    candidate: &str,
    reference: &str,
    provider: &dyn EmbeddingProvider,
) -> Result<TokenF1, EmbedError> {
    let cand_tokens: Vec<&str> = candidate.split_whitespace().collect();
    let ref_tokens: Vec<&str> = reference.split_whitespace().collect();

    match (cand_tokens.is_empty(), ref_tokens.is_empty()) {
        (true, true) => {
            return Ok(TokenF1 {
                precision: 100.0,
                recall: 100.0,
                f1: 100.0,
            })
        }
        (true, false) | (false, true) => {
            return Ok(TokenF1 {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
            })
        }
        _ => {}
    }

    let cand_vecs = provider.embed_many(&cand_tokens)?;
    let ref_vecs = provider.embed_many(&ref_tokens)?;

    let mean_best = |from: &[crate::knowledge::EmbeddingVector],
                     against: &[crate::knowledge::EmbeddingVector]|
     -> f64 {
        let total: f64 = from
            .iter()
            .map(|v| {
                against
                    .iter()
                    .map(|w| cosine(v, w))
                    .fold(f64::NEG_INFINITY, f64::max)
                    .max(0.0)
            })
            .sum();
        100.0 * total / from.len() as f64
    };

    let precision = mean_best(&cand_vecs, &ref_vecs).min(100.0);
    let recall = mean_best(&ref_vecs, &cand_vecs).min(100.0);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(TokenF1 {
        precision,
        recall,
        f1,
    })
}

/// Convenience bundle of the three scores for one candidate/reference pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityScores {
    pub levenshtein: f64,
    pub sentence_cosine: f64,
    pub token_f1: f64,
}

pub fn score_all(
    candidate: &str,
    reference: &str,
    provider: &dyn EmbeddingProvider,
) -> Result<SimilarityScores, EmbedError> {
    Ok(SimilarityScores {
        levenshtein: levenshtein_similarity(candidate, reference),
        sentence_cosine: sentence_cosine_similarity(candidate, reference, provider)?,
        token_f1: token_f1(candidate, reference, provider)?.f1,
    })
}
