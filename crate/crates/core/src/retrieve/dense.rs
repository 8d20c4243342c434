use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{fnv1a, rank, tokenize_for_retrieval, Query, RetrievalResult, RetrieveError};
use crate::corpus::{CodeDocument, Corpus};
use crate::lang::Language;

/// Anything that turns texts into equal-length vectors.
pub trait EmbeddingClient: Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, RetrieveError>;

    /// Identifies the embedding model in cache keys.
    fn model_id(&self) -> String {
        "embedding".to_string()
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
}

/// Client for an `/embed` endpoint taking `{"texts": [...]}` and returning
/// `{"vectors": [[...], ...]}`.
pub struct HttpEmbeddingClient {
    endpoint: String,
    api_key: Option<String>,
    batch_size: usize,
    http: reqwest::blocking::Client,
}

impl HttpEmbeddingClient {
    pub fn new(endpoint: &str, api_key: Option<String>, timeout: Duration) -> Result<Self, RetrieveError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| RetrieveError::service(None, e.to_string()))?;
        Ok(HttpEmbeddingClient {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            api_key,
            batch_size: 64,
            http,
        })
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, RetrieveError> {
        let mut req = self
            .http
            .post(format!("{}/embed", self.endpoint))
            .json(&EmbedRequest { texts });
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| RetrieveError::service(None, e.to_string()))?;
        let status = resp.status();
        let body = resp
            .text()
            .map_err(|e| RetrieveError::service(Some(status.as_u16()), e.to_string()))?;
        if !status.is_success() {
            let message = serde_json::from_str::<ErrorBody>(&body)
                .map(|b| b.error)
                .unwrap_or(body);
            return Err(RetrieveError::service(Some(status.as_u16()), message));
        }
        let parsed: EmbedResponse = serde_json::from_str(&body)
            .map_err(|e| RetrieveError::service(Some(status.as_u16()), format!("malformed response: {e}")))?;
        if parsed.vectors.len() != texts.len() {
            return Err(RetrieveError::service(
                Some(status.as_u16()),
                format!("expected {} vectors, got {}", texts.len(), parsed.vectors.len()),
            ));
        }
        Ok(parsed.vectors)
    }
}

impl EmbeddingClient for HttpEmbeddingClient {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, RetrieveError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            out.extend(self.embed_batch(chunk)?);
        }
        check_dims(&out, None)?;
        Ok(out)
    }

    fn model_id(&self) -> String {
        self.endpoint.clone()
    }
}

/// Local feature-hashing embedder: each retrieval term adds a signed unit to
/// one of `dim` buckets. Deterministic and dependency-free, so it doubles as
/// an offline embedding baseline.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    pub dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        HashEmbedder { dim: dim.max(1) }
    }

    pub fn vector(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0.0f32; self.dim];
        for term in tokenize_for_retrieval(text) {
            let h = fnv1a(term.as_bytes());
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        v
    }
}

impl EmbeddingClient for HashEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, RetrieveError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }

    fn model_id(&self) -> String {
        format!("hash-{}", self.dim)
    }
}

fn check_dims(vectors: &[Vec<f32>], expected: Option<usize>) -> Result<usize, RetrieveError> {
    let dim = expected.or_else(|| vectors.first().map(Vec::len)).unwrap_or(0);
    for v in vectors {
        if v.len() != dim {
            return Err(RetrieveError::DimensionMismatch {
                expected: dim,
                found: v.len(),
            });
        }
    }
    Ok(dim)
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (*x as f64, *y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

const CACHE_MAGIC: &[u8; 8] = b"RACGVEC1";

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    dim: usize,
    doc_ids: Vec<String>,
}

/// Document vectors for exact cosine search.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    dim: usize,
    doc_ids: Vec<String>,
    vectors: Vec<f32>,
}

impl DenseIndex {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Embeds `docs` that are not already in `self`; existing vectors are
    /// never recomputed.
    pub fn extend(&mut self, client: &dyn EmbeddingClient, docs: &[&CodeDocument]) -> Result<(), RetrieveError> {
        let known: HashMap<&str, ()> = self.doc_ids.iter().map(|d| (d.as_str(), ())).collect();
        let missing: Vec<&CodeDocument> = docs
            .iter()
            .copied()
            .filter(|d| !known.contains_key(d.doc_id.as_str()))
            .collect();
        if missing.is_empty() {
            return Ok(());
        }
        let texts: Vec<String> = missing.iter().map(|d| d.text().into_owned()).collect();
        let vectors = client.embed(&texts)?;
        let expected = (!self.doc_ids.is_empty()).then_some(self.dim);
        let dim = check_dims(&vectors, expected)?;
        self.dim = dim;
        for (d, v) in missing.iter().zip(vectors) {
            self.doc_ids.push(d.doc_id.clone());
            self.vectors.extend(v);
        }
        Ok(())
    }

    pub fn build(client: &dyn EmbeddingClient, docs: &[&CodeDocument]) -> Result<Self, RetrieveError> {
        let mut idx = DenseIndex {
            dim: 0,
            doc_ids: Vec::new(),
            vectors: Vec::new(),
        };
        idx.extend(client, docs)?;
        Ok(idx)
    }

    /// Loads vectors from `cache` when it exists, embeds whatever is
    /// missing, and rewrites the cache if anything was added. The result
    /// holds exactly `docs`, in their order.
    pub fn build_cached(client: &dyn EmbeddingClient, docs: &[&CodeDocument], cache: &Path) -> Result<Self, RetrieveError> {
        let mut idx = if cache.exists() {
            DenseIndex::load(cache)?
        } else {
            DenseIndex::build(client, &[])?
        };
        let before = idx.len();
        idx.extend(client, docs)?;
        if idx.len() != before {
            idx.save(cache)?;
        }
        Ok(idx.select(docs.iter().map(|d| d.doc_id.as_str())))
    }

    fn select<'a>(&self, ids: impl Iterator<Item = &'a str>) -> Self {
        let pos: HashMap<&str, usize> = self
            .doc_ids
            .iter()
            .enumerate()
            .map(|(i, d)| (d.as_str(), i))
            .collect();
        let mut out = DenseIndex {
            dim: self.dim,
            doc_ids: Vec::new(),
            vectors: Vec::new(),
        };
        for id in ids {
            if let Some(&i) = pos.get(id) {
                out.doc_ids.push(id.to_string());
                out.vectors.extend_from_slice(self.vector(i));
            }
        }
        out
    }

    /// Cache layout: magic, u32 LE header length, JSON header
    /// `{dim, doc_ids}`, then one row of little-endian f32 per doc.
    pub fn save(&self, path: &Path) -> Result<(), RetrieveError> {
        let header = serde_json::to_vec(&CacheHeader {
            dim: self.dim,
            doc_ids: self.doc_ids.clone(),
        })
        .expect("header serializes");
        let mut buf = Vec::with_capacity(12 + header.len() + self.vectors.len() * 4);
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
        buf.extend_from_slice(&header);
        for x in &self.vectors {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(RetrieveError::Cache)?;
        }
        let mut tmp = tempfile::NamedTempFile::new_in(path.parent().unwrap_or(Path::new(".")))
            .map_err(RetrieveError::Cache)?;
        tmp.write_all(&buf).map_err(RetrieveError::Cache)?;
        tmp.persist(path).map_err(|e| RetrieveError::Cache(e.error))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RetrieveError> {
        let bytes = fs::read(path).map_err(RetrieveError::Cache)?;
        let bad = |m: &str| RetrieveError::InvalidCache(format!("{}: {m}", path.display()));
        if bytes.len() < 12 || &bytes[..8] != CACHE_MAGIC {
            return Err(bad("not a vector cache"));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header_end = 12 + hlen;
        let header: CacheHeader = bytes
            .get(12..header_end)
            .ok_or_else(|| bad("truncated header"))
            .and_then(|h| serde_json::from_slice(h).map_err(|e| bad(&e.to_string())))?;
        let body = &bytes[header_end..];
        if body.len() != header.dim * header.doc_ids.len() * 4 {
            return Err(bad("vector block size disagrees with header"));
        }
        let vectors = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(DenseIndex {
            dim: header.dim,
            doc_ids: header.doc_ids,
            vectors,
        })
    }

    /// Top `k` by cosine similarity to `query_vec`, ties by doc_id.
    pub fn search(&self, query_vec: &[f32], family: &str, k: usize) -> Result<RetrievalResult, RetrieveError> {
        if !self.is_empty() && query_vec.len() != self.dim {
            return Err(RetrieveError::DimensionMismatch {
                expected: self.dim,
                found: query_vec.len(),
            });
        }
        let scored = self
            .doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), cosine(query_vec, self.vector(i))));
        Ok(RetrievalResult {
            query_family: family.to_string(),
            ranked: rank(scored, k),
            k,
        })
    }
}

pub fn embed_query(client: &dyn EmbeddingClient, query: &Query) -> Result<Vec<f32>, RetrieveError> {
    client
        .embed(std::slice::from_ref(&query.text))?
        .pop()
        .ok_or_else(|| RetrieveError::service(None, "no vector returned for query".into()))
}

/// Embeds the source-language documents and the query and ranks by cosine.
/// Builds the document vectors from scratch; use [`DenseIndex::build_cached`]
/// to reuse them across queries.
pub fn embed_search(
    client: &dyn EmbeddingClient,
    corpus: &Corpus,
    query: &Query,
    k: usize,
) -> Result<RetrievalResult, RetrieveError> {
    let docs = source_docs(corpus, query.source_language)?;
    let index = DenseIndex::build(client, &docs)?;
    index.search(&embed_query(client, query)?, &query.family_id, k)
}

pub(crate) fn source_docs(corpus: &Corpus, language: Language) -> Result<Vec<&CodeDocument>, RetrieveError> {
    let docs: Vec<&CodeDocument> = corpus.in_language(language).collect();
    if docs.is_empty() {
        return Err(RetrieveError::EmptySelection(language));
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CorpusVariant;

    struct Fixed(HashMap<String, Vec<f32>>);

    impl EmbeddingClient for Fixed {
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, RetrieveError> {
            Ok(texts.iter().map(|t| self.0[t].clone()).collect())
        }
    }

    fn doc(id: &str, code: &str) -> CodeDocument {
        CodeDocument {
            doc_id: id.into(),
            language: Language::Java,
            code: code.into(),
            nl_comment: None,
            family_id: id.into(),
        }
    }

    #[test]
    fn identical_vector_ranks_first_with_similarity_one() {
        let client = Fixed(HashMap::from([
            ("a".to_string(), vec![1.0, 0.0]),
            ("b".to_string(), vec![0.0, 1.0]),
            ("q".to_string(), vec![0.0, 2.0]),
        ]));
        let corpus = Corpus::new(vec![doc("A", "a"), doc("B", "b")], vec![], CorpusVariant::Doc);
        let q = Query::new("f", "q", Language::Java, Language::Java);
        let r = embed_search(&client, &corpus, &q, 2).unwrap();
        assert_eq!(r.ranked[0].0, "B");
        assert!((r.ranked[0].1 - 1.0).abs() < 1e-12);
        assert_eq!(r.ranked[1].1, 0.0);
    }

    #[test]
    fn mismatched_dimensions_are_rejected() {
        let client = Fixed(HashMap::from([
            ("a".to_string(), vec![1.0, 0.0]),
            ("b".to_string(), vec![1.0]),
        ]));
        let docs = [doc("A", "a"), doc("B", "b")];
        let refs: Vec<&CodeDocument> = docs.iter().collect();
        assert!(matches!(
            DenseIndex::build(&client, &refs),
            Err(RetrieveError::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn cache_round_trip_and_reuse() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vec.bin");
        let docs = [doc("A", "alpha beta"), doc("B", "gamma")];
        let refs: Vec<&CodeDocument> = docs.iter().collect();
        let first = DenseIndex::build_cached(&HashEmbedder::new(16), &refs, &path).unwrap();
        assert_eq!(DenseIndex::load(&path).unwrap(), first);

        struct Refuses;
        impl EmbeddingClient for Refuses {
            fn embed(&self, _: &[String]) -> Result<Vec<Vec<f32>>, RetrieveError> {
                Err(RetrieveError::service(None, "should not be called".into()))
            }
        }
        let again = DenseIndex::build_cached(&Refuses, &refs[..1], &path).unwrap();
        assert_eq!(again.doc_ids(), ["A"]);
        assert_eq!(again.vector(0), first.vector(0));
    }

    #[test]
    fn cosine_of_orthogonal_and_zero_vectors() {
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 3.0]), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
    }
}
