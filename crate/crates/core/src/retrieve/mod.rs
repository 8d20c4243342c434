//! Document ranking (BM25 and embedding cosine), the oracle retriever, and
//! Precision@K / Recall@K.

mod dense;
mod sparse;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{CodeDocument, Corpus};
use crate::lang::Language;

pub use dense::{
    cosine, embed_query, embed_search, DenseIndex, EmbeddingClient, HashEmbedder, HttpEmbeddingClient,
};
pub(crate) use dense::source_docs;
pub use sparse::{bm25_score, build_index, search, SparseIndex, BM25_B, BM25_K1};

pub const DEFAULT_K: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum RetrieveError {
    #[error("no {0} documents in the corpus")]
    EmptySelection(Language),
    #[error("document `{0}` is not in the index")]
    UnknownDoc(String),
    #[error("no golden document for family `{family_id}` in {language}")]
    MissingGolden { family_id: String, language: Language },
    #[error("embedding service error{}: {message}", .status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    EmbeddingService { status: Option<u16>, message: String },
    #[error("vector dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("vector cache: {0}")]
    Cache(#[source] std::io::Error),
    #[error("invalid vector cache {0}")]
    InvalidCache(String),
}

impl RetrieveError {
    pub(crate) fn service(status: Option<u16>, message: String) -> Self {
        RetrieveError::EmbeddingService { status, message }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub family_id: String,
    pub text: String,
    pub target_language: Language,
    /// Selects the sub-corpus searched.
    pub source_language: Language,
}

impl Query {
    pub fn new(family_id: &str, text: &str, target_language: Language, source_language: Language) -> Self {
        Query {
            family_id: family_id.to_string(),
            text: text.to_string(),
            target_language,
            source_language,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query_family: String,
    /// (doc_id, score), best first.
    pub ranked: Vec<(String, f64)>,
    pub k: usize,
}

impl RetrievalResult {
    pub fn doc_ids(&self) -> Vec<&str> {
        self.ranked.iter().map(|(d, _)| d.as_str()).collect()
    }
}

/// Sorts by descending score then ascending doc_id and keeps `k`.
pub(crate) fn rank(scored: impl Iterator<Item = (String, f64)>, k: usize) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = scored.collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    crate::mutate::fnv1a64(bytes)
}

/// Lowercased alphanumeric words; compounds joined by `_` or camelCase are
/// kept whole and also split into their parts.
pub fn tokenize_for_retrieval(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split(|c: char| !(c.is_alphanumeric() || c == '_')) {
        if word.is_empty() {
            continue;
        }
        let compound = word.to_lowercase();
        let parts = split_compound(word);
        let whole_is_part = parts.len() == 1 && parts[0] == compound;
        out.push(compound);
        if !whole_is_part {
            out.extend(parts);
        }
    }
    out
}

/// `parseHTTPResponse` -> parse, http, response; `max_sum` -> max, sum.
fn split_compound(word: &str) -> Vec<String> {
    let mut parts = Vec::new();
    for piece in word.split('_').filter(|p| !p.is_empty()) {
        let chars: Vec<char> = piece.chars().collect();
        let mut start = 0;
        for i in 1..chars.len() {
            let (prev, cur) = (chars[i - 1], chars[i]);
            let next_lower = chars.get(i + 1).is_some_and(|c| c.is_lowercase());
            let boundary = (prev.is_lowercase() && cur.is_uppercase())
                || (prev.is_uppercase() && cur.is_uppercase() && next_lower);
            if boundary {
                parts.push(chars[start..i].iter().collect::<String>().to_lowercase());
                start = i;
            }
        }
        parts.push(chars[start..].iter().collect::<String>().to_lowercase());
    }
    parts
}

/// The golden document of the query's family in its source language.
pub fn oracle_retrieve<'a>(corpus: &'a Corpus, query: &Query) -> Result<&'a CodeDocument, RetrieveError> {
    let missing = || RetrieveError::MissingGolden {
        family_id: query.family_id.clone(),
        language: query.source_language,
    };
    let id = corpus
        .golden_doc_id(&query.family_id, query.source_language)
        .ok_or_else(missing)?;
    corpus.get(id).ok_or_else(missing)
}

fn hits(result: &RetrievalResult, golden: &HashSet<String>, k: usize) -> usize {
    result
        .ranked
        .iter()
        .take(k)
        .filter(|(d, _)| golden.contains(d))
        .count()
}

pub fn precision_at_k(result: &RetrievalResult, golden: &HashSet<String>, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    hits(result, golden, k) as f64 / k as f64
}

pub fn recall_at_k(result: &RetrievalResult, golden: &HashSet<String>, total_golden: usize, k: usize) -> f64 {
    if total_golden == 0 {
        return 0.0;
    }
    hits(result, golden, k) as f64 / total_golden as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_splits_compounds() {
        assert_eq!(tokenize_for_retrieval("parseHTTPResponse"), ["parsehttpresponse", "parse", "http", "response"]);
        assert_eq!(tokenize_for_retrieval("max_sum"), ["max_sum", "max", "sum"]);
        assert!(tokenize_for_retrieval("").is_empty());
        assert_eq!(tokenize_for_retrieval("a+b (x)"), ["a", "b", "x"]);
    }

    fn result(ids: &[&str]) -> RetrievalResult {
        RetrievalResult {
            query_family: "f".into(),
            ranked: ids.iter().map(|d| (d.to_string(), 1.0)).collect(),
            k: ids.len(),
        }
    }

    #[test]
    fn precision_and_recall_definitions() {
        let golden: HashSet<String> = ["b", "d"].iter().map(|s| s.to_string()).collect();
        let r = result(&["a", "b", "c", "d", "e"]);
        assert_eq!(precision_at_k(&r, &golden, 5), 0.4);
        assert!((recall_at_k(&r, &golden, 13, 5) - 2.0 / 13.0).abs() < 1e-15);
        assert_eq!(precision_at_k(&result(&[]), &golden, 3), 0.0);
        assert_eq!(recall_at_k(&result(&[]), &golden, 13, 3), 0.0);
    }
}
