use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{rank, tokenize_for_retrieval, Query, RetrievalResult, RetrieveError};
use crate::corpus::Corpus;
use crate::lang::Language;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

/// Okapi BM25 statistics over one language's documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseIndex {
    /// Term to (doc_id, term frequency), sorted by doc_id.
    pub postings: BTreeMap<String, Vec<(String, u32)>>,
    pub doc_lengths: BTreeMap<String, usize>,
    pub avg_doc_length: f64,
    pub doc_count: usize,
}

impl SparseIndex {
    /// Indexes `(doc_id, text)` pairs. Later duplicates of a doc_id are
    /// ignored.
    pub fn from_texts<'a>(docs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut doc_lengths = BTreeMap::new();
        let mut postings: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
        for (id, text) in docs {
            if doc_lengths.contains_key(id) {
                continue;
            }
            let terms = tokenize_for_retrieval(text);
            doc_lengths.insert(id.to_string(), terms.len());
            for t in terms {
                *postings.entry(t).or_default().entry(id.to_string()).or_default() += 1;
            }
        }
        let doc_count = doc_lengths.len();
        let total: usize = doc_lengths.values().sum();
        let avg_doc_length = if doc_count == 0 { 0.0 } else { total as f64 / doc_count as f64 };
        SparseIndex {
            postings: postings
                .into_iter()
                .map(|(t, docs)| (t, docs.into_iter().collect()))
                .collect(),
            doc_lengths,
            avg_doc_length,
            doc_count,
        }
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.doc_count as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, tf: u32, doc_len: usize, df: usize) -> f64 {
        let tf = tf as f64;
        let norm = if self.avg_doc_length > 0.0 {
            1.0 - BM25_B + BM25_B * doc_len as f64 / self.avg_doc_length
        } else {
            1.0
        };
        self.idf(df) * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * norm)
    }

    /// BM25 score of every document with a nonzero score.
    fn scores(&self, query_terms: &[String]) -> BTreeMap<&str, f64> {
        let mut acc: BTreeMap<&str, f64> = BTreeMap::new();
        for term in query_terms {
            let Some(list) = self.postings.get(term) else { continue };
            for (id, tf) in list {
                let w = self.term_weight(*tf, self.doc_lengths[id], list.len());
                *acc.entry(id.as_str()).or_default() += w;
            }
        }
        acc
    }
}

/// Indexes the documents of `language`, using each document's retrieval
/// text (comment block plus code, or code alone in the comment-free
/// variant).
pub fn build_index(corpus: &Corpus, language: Language) -> Result<SparseIndex, RetrieveError> {
    let docs: Vec<(String, String)> = corpus
        .in_language(language)
        .map(|d| (d.doc_id.clone(), d.text().into_owned()))
        .collect();
    if docs.is_empty() {
        return Err(RetrieveError::EmptySelection(language));
    }
    Ok(SparseIndex::from_texts(docs.iter().map(|(a, b)| (a.as_str(), b.as_str()))))
}

pub fn bm25_score(index: &SparseIndex, query_terms: &[String], doc_id: &str) -> Result<f64, RetrieveError> {
    let &len = index
        .doc_lengths
        .get(doc_id)
        .ok_or_else(|| RetrieveError::UnknownDoc(doc_id.to_string()))?;
    let mut score = 0.0;
    for term in query_terms {
        let Some(list) = index.postings.get(term) else { continue };
        if let Ok(pos) = list.binary_search_by(|(id, _)| id.as_str().cmp(doc_id)) {
            score += index.term_weight(list[pos].1, len, list.len());
        }
    }
    Ok(score)
}

/// Top `k` documents by BM25, ties and zero-score padding ordered by doc_id.
pub fn search(index: &SparseIndex, query: &Query, k: usize) -> RetrievalResult {
    let terms = tokenize_for_retrieval(&query.text);
    let scores = index.scores(&terms);
    let all = index
        .doc_lengths
        .keys()
        .map(|id| (id.clone(), scores.get(id.as_str()).copied().unwrap_or(0.0)));
    RetrievalResult {
        query_family: query.family_id.clone(),
        ranked: rank(all, k),
        k,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn terms(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn single_document_hand_value() {
        let idx = SparseIndex::from_texts([("d", "alpha")]);
        let s = bm25_score(&idx, &terms(&["alpha"]), "d").unwrap();
        let expected = (1.0f64 + 0.5 / 1.5).ln();
        assert!((s - expected).abs() < 1e-12);
        assert!((s - 0.2877).abs() < 1e-4);
    }

    #[test]
    fn zero_overlap_scores_zero() {
        let idx = SparseIndex::from_texts([("a", "one two"), ("b", "three")]);
        assert_eq!(bm25_score(&idx, &terms(&["four"]), "a").unwrap(), 0.0);
        assert!(matches!(bm25_score(&idx, &terms(&["one"]), "zz"), Err(RetrieveError::UnknownDoc(_))));
    }

    #[test]
    fn statistics() {
        let idx = SparseIndex::from_texts([("a", "x y z"), ("b", "x"), ("c", "p q r s t u v w q e")]);
        assert_eq!(idx.doc_count, 3);
        assert_eq!(idx.doc_lengths["c"], 10);
        assert!((idx.avg_doc_length - 14.0 / 3.0).abs() < 1e-12);
        assert_eq!(idx.postings["x"], vec![("a".to_string(), 1), ("b".to_string(), 1)]);
    }

    #[test]
    fn search_pads_with_zero_scores_by_id() {
        let idx = SparseIndex::from_texts([("b", "cat"), ("a", "dog"), ("c", "fish cat")]);
        let q = Query::new("f", "cat", Language::Python, Language::Python);
        let r = search(&idx, &q, 3);
        let ids: Vec<&str> = r.ranked.iter().map(|(d, _)| d.as_str()).collect();
        assert_eq!(ids, ["b", "c", "a"]);
        assert_eq!(r.ranked[2].1, 0.0);
        assert_eq!(search(&idx, &q, 10).ranked.len(), 3);
    }
}
