//! The four adversarial mutation operators and their applicability rates.
//!
//! Every operator works at token or clause level over the shared lexer, so
//! comments are never touched, and logic and control-flow mutations never
//! reach into string literals.

mod rng;
mod sites;

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CodeDocument, Corpus};
use crate::lang::Language;
use crate::lexer::{lex, TokenKind};

pub use rng::{document_seed, fnv1a64, SplitMix64};
pub use sites::{find_sites, logic_inverse};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MutationType {
    #[serde(alias = "logical")]
    LogicalKeyword,
    #[serde(alias = "controlflow")]
    ControlFlow,
    #[serde(alias = "syntax")]
    Syntax,
    #[serde(alias = "lexicon")]
    Lexicon,
}

impl MutationType {
    pub const ALL: [MutationType; 4] = [
        MutationType::LogicalKeyword,
        MutationType::ControlFlow,
        MutationType::Syntax,
        MutationType::Lexicon,
    ];

    /// Short name used on the command line and in reports.
    pub fn id(self) -> &'static str {
        match self {
            MutationType::LogicalKeyword => "logical",
            MutationType::ControlFlow => "controlflow",
            MutationType::Syntax => "syntax",
            MutationType::Lexicon => "lexicon",
        }
    }
}

impl fmt::Display for MutationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown mutation type `{0}` (expected logical, controlflow, syntax or lexicon)")]
pub struct UnknownMutation(pub String);

impl FromStr for MutationType {
    type Err = UnknownMutation;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        MutationType::ALL
            .into_iter()
            .find(|m| m.id() == lower || format!("{m:?}").to_ascii_lowercase() == lower)
            .ok_or_else(|| UnknownMutation(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SiteKind {
    LogicOperator,
    BranchClause,
    IdentifierChar,
    Identifier,
    StringConstant,
    Keyword,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationSite {
    /// Half-open byte range into the code.
    pub byte_span: (usize, usize),
    pub kind: SiteKind,
    pub token_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationRecord {
    pub doc_id: String,
    pub mutation: MutationType,
    /// The selected site; `None` when the operator had nowhere to apply.
    pub site: Option<MutationSite>,
    pub original: String,
    pub mutated: String,
    pub seed: u64,
    pub applied: bool,
    /// Human-readable description of the rewrite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MutateError {
    #[error("no documents in the selected languages")]
    EmptySelection,
}

/// Applies `mutation` at one site chosen by the document's seeded stream.
/// `seed` is the global seed; the per-document stream mixes in `doc_id`.
pub fn apply_mutation(doc: &CodeDocument, mutation: MutationType, seed: u64) -> MutationRecord {
    let code = doc.code.as_str();
    let sites = find_sites(code, doc.language, mutation);
    let mut rng = SplitMix64::for_document(seed, &doc.doc_id);
    let unapplied = || MutationRecord {
        doc_id: doc.doc_id.clone(),
        mutation,
        site: None,
        original: code.to_string(),
        mutated: code.to_string(),
        seed,
        applied: false,
        detail: None,
    };
    if sites.is_empty() {
        return unapplied();
    }
    let (site, mutated, detail) = match mutation {
        MutationType::Lexicon => lexicon_rewrite(code, doc.language, &sites, &mut rng),
        _ => {
            let site = sites[rng.below(sites.len())].clone();
            let (mutated, detail) = rewrite(code, doc.language, mutation, &site);
            (site, mutated, detail)
        }
    };
    if mutated == code {
        return unapplied();
    }
    MutationRecord {
        doc_id: doc.doc_id.clone(),
        mutation,
        site: Some(site),
        original: code.to_string(),
        mutated,
        seed,
        applied: true,
        detail: Some(detail),
    }
}

fn splice(code: &str, (start, end): (usize, usize), with: &str) -> String {
    let mut out = String::with_capacity(code.len() + with.len());
    out.push_str(&code[..start]);
    out.push_str(with);
    out.push_str(&code[end..]);
    out
}

/// No-op statement that replaces a deleted loop continuation.
fn continue_replacement(lang: Language) -> &'static str {
    match lang {
        Language::Python => "pass",
        Language::Ruby => "nil",
        Language::Perl => "1",
        Language::Kotlin => "Unit",
        _ => "",
    }
}

fn rewrite(code: &str, lang: Language, mutation: MutationType, site: &MutationSite) -> (String, String) {
    let text = site.token_text.as_str();
    match mutation {
        MutationType::LogicalKeyword => {
            let inv = logic_inverse(text).unwrap_or(text);
            let detail = if inv.is_empty() {
                format!("delete `{text}`")
            } else {
                format!("`{text}` -> `{inv}`")
            };
            (splice(code, site.byte_span, inv), detail)
        }
        MutationType::ControlFlow => {
            if matches!(text, "continue" | "next") {
                let with = continue_replacement(lang);
                (splice(code, site.byte_span, with), format!("replace `{text}` with no-op"))
            } else {
                let first = text.trim_start().lines().next().unwrap_or_default().trim();
                (splice(code, site.byte_span, ""), format!("delete clause `{first}`"))
            }
        }
        MutationType::Syntax => {
            let upper = text.to_ascii_uppercase();
            (splice(code, site.byte_span, &upper), format!("`{text}` -> `{upper}` at byte {}", site.byte_span.0))
        }
        MutationType::Lexicon => unreachable!("lexicon rewrites are chosen by sub-operator"),
    }
}

const FRESH_FIRST: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
const FRESH_REST: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";
const STRING_CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";

fn lexicon_rewrite(
    code: &str,
    lang: Language,
    sites: &[MutationSite],
    rng: &mut SplitMix64,
) -> (MutationSite, String, String) {
    let available: Vec<SiteKind> = [SiteKind::Identifier, SiteKind::StringConstant, SiteKind::Keyword]
        .into_iter()
        .filter(|k| sites.iter().any(|s| s.kind == *k))
        .collect();
    let kind = available[rng.below(available.len())];
    let of_kind: Vec<&MutationSite> = sites.iter().filter(|s| s.kind == kind).collect();
    let site = of_kind[rng.below(of_kind.len())].clone();
    let (mutated, detail) = match kind {
        SiteKind::Identifier => {
            let taken: HashSet<&str> = sites
                .iter()
                .filter(|s| s.kind == SiteKind::Identifier)
                .map(|s| s.token_text.as_str())
                .collect();
            let fresh = loop {
                let mut name = String::with_capacity(8);
                name.push(FRESH_FIRST[rng.below(FRESH_FIRST.len())] as char);
                for _ in 1..8 {
                    name.push(FRESH_REST[rng.below(FRESH_REST.len())] as char);
                }
                if !taken.contains(name.as_str()) && !lang.is_keyword(&name) {
                    break name;
                }
            };
            let lx = lex(code, lang);
            let mut out = String::with_capacity(code.len());
            let mut count = 0;
            for (i, tok) in lx.tokens.iter().enumerate() {
                if tok.kind == TokenKind::Ident && lx.text(i) == site.token_text {
                    out.push_str(&fresh);
                    count += 1;
                } else {
                    out.push_str(lx.text(i));
                }
            }
            (out, format!("rename `{}` -> `{fresh}` ({count} occurrences)", site.token_text))
        }
        SiteKind::StringConstant => {
            let len = site.token_text.chars().count();
            let replacement = loop {
                let s: String = (0..len)
                    .map(|_| STRING_CHARS[rng.below(STRING_CHARS.len())] as char)
                    .collect();
                if s != site.token_text {
                    break s;
                }
            };
            (splice(code, site.byte_span, &replacement), format!("string {:?} -> {replacement:?}", site.token_text))
        }
        _ => (splice(code, site.byte_span, ""), format!("delete keyword `{}`", site.token_text)),
    };
    (site, mutated, detail)
}

/// The document with the record's mutated code.
pub fn mutated_document(doc: &CodeDocument, record: &MutationRecord) -> CodeDocument {
    CodeDocument {
        code: record.mutated.clone(),
        ..doc.clone()
    }
}

/// Mutates each document independently, preserving order.
pub fn perturb_retrieved(
    docs: &[CodeDocument],
    mutation: MutationType,
    seed: u64,
) -> (Vec<CodeDocument>, Vec<MutationRecord>) {
    docs.iter()
        .map(|d| {
            let record = apply_mutation(d, mutation, seed);
            (mutated_document(d, &record), record)
        })
        .unzip()
}

/// Mutates a whole corpus in parallel; the result does not depend on
/// scheduling because each document has its own stream.
pub fn mutate_corpus(corpus: &Corpus, mutation: MutationType, seed: u64) -> (Corpus, Vec<MutationRecord>) {
    let pairs: Vec<(CodeDocument, MutationRecord)> = corpus
        .documents()
        .par_iter()
        .map(|d| {
            let record = apply_mutation(d, mutation, seed);
            (mutated_document(d, &record), record)
        })
        .collect();
    let (docs, records): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    (
        Corpus::new(docs, corpus.golden_entries().to_vec(), corpus.variant()),
        records,
    )
}

/// Fraction of documents in `languages` with at least one site.
pub fn applicability_rate(
    corpus: &Corpus,
    languages: &BTreeSet<Language>,
    mutation: MutationType,
) -> Result<f64, MutateError> {
    let docs: Vec<&CodeDocument> = corpus
        .documents()
        .iter()
        .filter(|d| languages.contains(&d.language))
        .collect();
    if docs.is_empty() {
        return Err(MutateError::EmptySelection);
    }
    let hits = docs
        .par_iter()
        .filter(|d| !find_sites(&d.code, d.language, mutation).is_empty())
        .count();
    Ok(hits as f64 / docs.len() as f64)
}

/// Applicability per language, for every language present in the corpus.
pub fn applicability_by_language(corpus: &Corpus, mutation: MutationType) -> Vec<(Language, f64)> {
    let present: BTreeSet<Language> = corpus.documents().iter().map(|d| d.language).collect();
    present
        .into_iter()
        .filter_map(|l| {
            let one = BTreeSet::from([l]);
            applicability_rate(corpus, &one, mutation).ok().map(|r| (l, r))
        })
        .collect()
}
