//! Multi-language code corpora: loading, validation, golden-document
//! annotations and the comment-free corpus variant.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::execute::{ExecError, Executor, Verdict};
use crate::lang::Language;
use crate::lexer::{lex, TokenKind};

/// One benchmark problem in one language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeInstance {
    pub instance_id: String,
    pub language: Language,
    pub nl_prompt: String,
    pub reference_solution: String,
    pub test_cases: String,
    pub entry_point: String,
    pub family_id: String,
}

/// A retrievable corpus entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeDocument {
    pub doc_id: String,
    pub language: Language,
    pub code: String,
    /// Natural-language comment block, written in the language's comment
    /// syntax so that `nl_comment + "\n" + code` is still valid source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nl_comment: Option<String>,
    pub family_id: String,
}

impl CodeDocument {
    /// Text presented to retrievers and prompts: the comment block followed
    /// by the code, or just the code when there is no comment.
    pub fn text(&self) -> Cow<'_, str> {
        match &self.nl_comment {
            Some(c) if !c.is_empty() => Cow::Owned(format!("{c}\n{}", self.code)),
            _ => Cow::Borrowed(&self.code),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusVariant {
    #[default]
    Doc,
    DocNoNl,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldenEntry {
    pub family_id: String,
    pub language: Language,
    pub doc_id: String,
}

/// Documents plus golden annotations. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<CodeDocument>,
    golden: Vec<GoldenEntry>,
    variant: CorpusVariant,
    by_id: HashMap<String, usize>,
    golden_index: BTreeMap<(String, Language), String>,
}

impl Corpus {
    /// Builds a corpus without validating it. Later duplicates of a doc_id
    /// or a golden key are shadowed in lookups but remain visible to
    /// [`validate_corpus`].
    pub fn new(documents: Vec<CodeDocument>, golden: Vec<GoldenEntry>, variant: CorpusVariant) -> Self {
        let mut by_id = HashMap::with_capacity(documents.len());
        for (i, d) in documents.iter().enumerate() {
            by_id.entry(d.doc_id.clone()).or_insert(i);
        }
        let mut golden_index = BTreeMap::new();
        for g in &golden {
            golden_index
                .entry((g.family_id.clone(), g.language))
                .or_insert_with(|| g.doc_id.clone());
        }
        Corpus {
            documents,
            golden,
            variant,
            by_id,
            golden_index,
        }
    }

    pub fn documents(&self) -> &[CodeDocument] {
        &self.documents
    }

    pub fn golden_entries(&self) -> &[GoldenEntry] {
        &self.golden
    }

    pub fn variant(&self) -> CorpusVariant {
        self.variant
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&CodeDocument> {
        self.by_id.get(doc_id).map(|&i| &self.documents[i])
    }

    pub fn golden_doc_id(&self, family_id: &str, language: Language) -> Option<&str> {
        self.golden_index
            .get(&(family_id.to_string(), language))
            .map(String::as_str)
    }

    /// All golden doc ids of a family, one per annotated language.
    pub fn golden_for_family(&self, family_id: &str) -> Vec<&str> {
        self.golden_index
            .iter()
            .filter(|((f, _), _)| f == family_id)
            .map(|(_, d)| d.as_str())
            .collect()
    }

    pub fn in_language(&self, language: Language) -> impl Iterator<Item = &CodeDocument> {
        self.documents.iter().filter(move |d| d.language == language)
    }

    /// Same documents and annotations with a different variant tag.
    pub fn with_variant(self, variant: CorpusVariant) -> Self {
        Corpus { variant, ..self }
    }

    /// Stable content hash over documents, annotations and variant.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for d in &self.documents {
            h.update(serde_json::to_vec(d).expect("document serializes"));
            h.update(b"\n");
        }
        for g in &self.golden {
            h.update(serde_json::to_vec(g).expect("golden serializes"));
            h.update(b"\n");
        }
        h.update(format!("{:?}", self.variant).as_bytes());
        hex::encode(h.finalize())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line_no}: {message}")]
    Parse {
        path: PathBuf,
        line_no: usize,
        message: String,
    },
    #[error("duplicate doc_id `{0}`")]
    DuplicateId(String),
    #[error("corpus failed validation with {} violation(s)", .0.violations.len())]
    Invalid(ValidationReport),
}

impl CorpusError {
    pub fn line_no(&self) -> Option<usize> {
        match self {
            CorpusError::Parse { line_no, .. } => Some(*line_no),
            _ => None,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses a JSON Lines file. Blank lines are skipped; line numbers are
/// 1-based.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
            path: path.to_path_buf(),
            line_no: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CorpusError> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).expect("serializable record");
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads documents and golden annotations without checking invariants
/// beyond doc_id uniqueness.
pub fn read_corpus(
    docs_path: &Path,
    golden_path: Option<&Path>,
    variant: CorpusVariant,
) -> Result<Corpus, CorpusError> {
    let documents: Vec<CodeDocument> = read_jsonl(docs_path)?;
    let mut seen = HashSet::new();
    for d in &documents {
        if !seen.insert(d.doc_id.as_str()) {
            return Err(CorpusError::DuplicateId(d.doc_id.clone()));
        }
    }
    let golden = match golden_path {
        Some(p) => read_jsonl(p)?,
        None => Vec::new(),
    };
    Ok(Corpus::new(documents, golden, variant))
}

/// Reads a corpus and rejects it unless it passes [`validate_corpus`].
pub fn load_corpus(
    docs_path: &Path,
    golden_path: Option<&Path>,
    variant: CorpusVariant,
) -> Result<Corpus, CorpusError> {
    let corpus = read_corpus(docs_path, golden_path, variant)?;
    let report = validate_corpus(&corpus);
    if report.is_clean() {
        Ok(corpus)
    } else {
        Err(CorpusError::Invalid(report))
    }
}

pub fn save_corpus(corpus: &Corpus, docs_path: &Path, golden_path: &Path) -> Result<(), CorpusError> {
    write_jsonl(docs_path, &corpus.documents)?;
    write_jsonl(golden_path, &corpus.golden)
}

pub fn load_instances(path: &Path) -> Result<Vec<CodeInstance>, CorpusError> {
    read_jsonl(path)
}

pub fn save_instances(path: &Path, instances: &[CodeInstance]) -> Result<(), CorpusError> {
    write_jsonl(path, instances)
}

/// Result of removing comments from one source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stripped {
    pub code: String,
    /// A block comment was unterminated; everything after its opener was
    /// dropped.
    pub unterminated_comment: bool,
}

/// Removes line, block, embedded-documentation comments and Python
/// docstrings. Lines left holding only whitespace are dropped, whitespace
/// trailing a removed end-of-line comment is dropped, and a block comment
/// between two tokens becomes a single space. All other bytes are kept.
pub fn strip_code(code: &str, language: Language) -> Stripped {
    let lx = lex(code, language);
    let b = code.as_bytes();
    let horizontal = |c: u8| c == b' ' || c == b'\t' || c == b'\r';

    // Runs of comments separated only by horizontal whitespace.
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < lx.tokens.len() {
        if !lx.tokens[i].is_comment() {
            i += 1;
            continue;
        }
        let start = lx.tokens[i].start;
        let mut end = lx.tokens[i].end;
        let mut j = i + 1;
        loop {
            let mut k = j;
            if k < lx.tokens.len()
                && lx.tokens[k].kind == TokenKind::Whitespace
                && !lx.text(k).contains('\n')
            {
                k += 1;
            }
            if k < lx.tokens.len() && lx.tokens[k].is_comment() {
                end = lx.tokens[k].end;
                j = k + 1;
            } else {
                break;
            }
        }
        groups.push((start, end));
        i = j;
    }

    let mut out = String::with_capacity(code.len());
    let mut cursor = 0;
    for (start, end) in groups {
        let mut after = end;
        while after < b.len() && horizontal(b[after]) {
            after += 1;
        }
        let ends_line = after == b.len() || b[after] == b'\n';
        let (cut_start, cut_end, replacement) = if lx.starts_line(start) && ends_line {
            (lx.line_start(start), lx.line_end_inclusive(after.min(b.len())), "")
        } else if ends_line {
            let mut before = start;
            while before > 0 && horizontal(b[before - 1]) {
                before -= 1;
            }
            (before, after, "")
        } else {
            let needs_space = start > 0
                && !b[start - 1].is_ascii_whitespace()
                && !b[end].is_ascii_whitespace();
            (start, end, if needs_space { " " } else { "" })
        };
        let cut_start = cut_start.max(cursor);
        out.push_str(&code[cursor..cut_start]);
        out.push_str(replacement);
        cursor = cut_end.max(cursor);
    }
    out.push_str(&code[cursor..]);
    Stripped {
        code: out,
        unterminated_comment: lx.unterminated_comment,
    }
}

/// Comment-free copy of a document with its NL comment cleared.
pub fn strip_comments(doc: &CodeDocument) -> CodeDocument {
    let stripped = strip_code(&doc.code, doc.language);
    if stripped.unterminated_comment {
        tracing::warn!(doc_id = %doc.doc_id, "unterminated block comment stripped to end of input");
    }
    CodeDocument {
        code: stripped.code,
        nl_comment: None,
        ..doc.clone()
    }
}

pub fn make_variant(corpus: &Corpus, variant: CorpusVariant) -> Corpus {
    match variant {
        CorpusVariant::Doc => corpus.clone(),
        CorpusVariant::DocNoNl => Corpus::new(
            corpus.documents.iter().map(strip_comments).collect(),
            corpus.golden.clone(),
            CorpusVariant::DocNoNl,
        ),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    EmptyCode,
    DuplicateDocId,
    GoldenMissingDoc,
    GoldenLanguageMismatch,
    GoldenFamilyMismatch,
    DuplicateGolden,
    CommentInPureCode,
    EmptyReferenceSolution,
    EmptyTestCases,
    DuplicateInstance,
    EntryPointMissing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub doc_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub language: Option<Language>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(
        &mut self,
        kind: ViolationKind,
        doc_id: Option<&str>,
        family_id: Option<&str>,
        language: Option<Language>,
        message: String,
    ) {
        self.violations.push(Violation {
            kind,
            doc_id: doc_id.map(str::to_string),
            family_id: family_id.map(str::to_string),
            language,
            message,
        });
    }
}

pub fn validate_corpus(corpus: &Corpus) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen = HashSet::new();
    for d in &corpus.documents {
        if !seen.insert(d.doc_id.as_str()) {
            report.push(
                ViolationKind::DuplicateDocId,
                Some(&d.doc_id),
                Some(&d.family_id),
                Some(d.language),
                format!("doc_id `{}` appears more than once", d.doc_id),
            );
        }
        if d.code.is_empty() {
            report.push(
                ViolationKind::EmptyCode,
                Some(&d.doc_id),
                Some(&d.family_id),
                Some(d.language),
                "code is empty".into(),
            );
        }
        if corpus.variant == CorpusVariant::DocNoNl {
            let has_comment = lex(&d.code, d.language).tokens.iter().any(|t| t.is_comment());
            if d.nl_comment.is_some() || has_comment {
                report.push(
                    ViolationKind::CommentInPureCode,
                    Some(&d.doc_id),
                    Some(&d.family_id),
                    Some(d.language),
                    "pure-code corpus document carries comments".into(),
                );
            }
        }
    }
    let mut golden_keys = HashSet::new();
    for g in &corpus.golden {
        if !golden_keys.insert((g.family_id.as_str(), g.language)) {
            report.push(
                ViolationKind::DuplicateGolden,
                Some(&g.doc_id),
                Some(&g.family_id),
                Some(g.language),
                format!("more than one golden document for ({}, {})", g.family_id, g.language.id()),
            );
        }
        match corpus.get(&g.doc_id) {
            None => report.push(
                ViolationKind::GoldenMissingDoc,
                Some(&g.doc_id),
                Some(&g.family_id),
                Some(g.language),
                format!("golden doc_id `{}` is not in the corpus", g.doc_id),
            ),
            Some(d) if d.language != g.language => report.push(
                ViolationKind::GoldenLanguageMismatch,
                Some(&g.doc_id),
                Some(&g.family_id),
                Some(g.language),
                format!("golden doc is {} but annotated as {}", d.language.id(), g.language.id()),
            ),
            Some(d) if d.family_id != g.family_id => report.push(
                ViolationKind::GoldenFamilyMismatch,
                Some(&g.doc_id),
                Some(&g.family_id),
                Some(g.language),
                format!("golden doc belongs to family `{}`", d.family_id),
            ),
            Some(_) => {}
        }
    }
    report
}

pub fn validate_instances(instances: &[CodeInstance]) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut keys = HashSet::new();
    for inst in instances {
        let push = |report: &mut ValidationReport, kind, msg: String| {
            report.push(kind, Some(&inst.instance_id), Some(&inst.family_id), Some(inst.language), msg)
        };
        if inst.reference_solution.is_empty() {
            push(&mut report, ViolationKind::EmptyReferenceSolution, "reference_solution is empty".into());
        }
        if inst.test_cases.is_empty() {
            push(&mut report, ViolationKind::EmptyTestCases, "test_cases is empty".into());
        }
        if !keys.insert((inst.family_id.as_str(), inst.language)) {
            push(
                &mut report,
                ViolationKind::DuplicateInstance,
                format!("({}, {}) is not unique", inst.family_id, inst.language.id()),
            );
        }
        let lx = lex(&inst.reference_solution, inst.language);
        let found = (0..lx.tokens.len()).any(|i| {
            matches!(lx.tokens[i].kind, TokenKind::Ident | TokenKind::Keyword) && lx.text(i) == inst.entry_point
        });
        if !found {
            push(
                &mut report,
                ViolationKind::EntryPointMissing,
                format!("entry point `{}` does not occur in the reference solution", inst.entry_point),
            );
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationEntry {
    pub instance_id: String,
    pub family_id: String,
    pub language: Language,
    /// Verdict of each round, in order.
    pub rounds: Vec<Verdict>,
    pub verified: bool,
    /// Assertion or error line from the first failing round.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failing_test: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub entries: Vec<VerificationEntry>,
}

impl VerificationReport {
    pub fn verified_ids(&self) -> HashSet<&str> {
        self.entries
            .iter()
            .filter(|e| e.verified)
            .map(|e| e.instance_id.as_str())
            .collect()
    }
}

/// Runs each instance's reference solution against its tests `rounds`
/// times. An instance is verified only if every round passes.
pub fn verify_solutions(
    instances: &[CodeInstance],
    executor: &dyn Executor,
    rounds: usize,
) -> Result<VerificationReport, ExecError> {
    assert!(rounds >= 1, "verification needs at least one round");
    let mut report = VerificationReport::default();
    for inst in instances {
        let mut verdicts = Vec::with_capacity(rounds);
        let mut failing_test = None;
        for _ in 0..rounds {
            let result = executor.execute(&inst.reference_solution, inst)?;
            if result.verdict != Verdict::Pass && failing_test.is_none() {
                failing_test = Some(result.failure_line());
            }
            verdicts.push(result.verdict);
        }
        report.entries.push(VerificationEntry {
            instance_id: inst.instance_id.clone(),
            family_id: inst.family_id.clone(),
            language: inst.language,
            verified: verdicts.iter().all(|v| *v == Verdict::Pass),
            rounds: verdicts,
            failing_test,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, lang: Language, code: &str, comment: Option<&str>, family: &str) -> CodeDocument {
        CodeDocument {
            doc_id: id.into(),
            language: lang,
            code: code.into(),
            nl_comment: comment.map(str::to_string),
            family_id: family.into(),
        }
    }

    fn golden(family: &str, lang: Language, id: &str) -> GoldenEntry {
        GoldenEntry {
            family_id: family.into(),
            language: lang,
            doc_id: id.into(),
        }
    }

    #[test]
    fn strips_python_trailing_comment() {
        assert_eq!(strip_code("x = 1  # note", Language::Python).code, "x = 1");
    }

    #[test]
    fn strips_java_block_and_line_comments() {
        assert_eq!(strip_code("/* a */ int x; // b", Language::Java).code, " int x;");
    }

    #[test]
    fn keeps_comment_lookalikes_in_strings() {
        let src = "s = \"# not a comment\"";
        assert_eq!(strip_code(src, Language::Python).code, src);
    }

    #[test]
    fn drops_comment_only_lines_and_docstrings() {
        let src = "def f(x):\n    \"\"\"Doc.\n    More.\n    \"\"\"\n    # step\n    return x  # done\n";
        assert_eq!(strip_code(src, Language::Python).code, "def f(x):\n    return x\n");
    }

    #[test]
    fn block_comment_between_tokens_becomes_space() {
        assert_eq!(strip_code("a-/*x*/-b;", Language::JavaScript).code, "a- -b;");
        assert_eq!(strip_code("f(/*x*/ 1)", Language::Go).code, "f( 1)");
    }

    #[test]
    fn unterminated_block_comment_is_flagged_not_fatal() {
        let s = strip_code("int x; /* open\nmore", Language::Cpp);
        assert!(s.unterminated_comment);
        assert_eq!(s.code, "int x;");
    }

    #[test]
    fn validate_reports_missing_golden_and_duplicates() {
        let docs = vec![
            doc("a", Language::Python, "x = 1", None, "f1"),
            doc("b", Language::Python, "y = 2", None, "f1"),
        ];
        let clean = Corpus::new(docs.clone(), vec![golden("f1", Language::Python, "a")], CorpusVariant::Doc);
        assert!(validate_corpus(&clean).is_clean());

        let missing = Corpus::new(docs.clone(), vec![golden("f1", Language::Python, "zz")], CorpusVariant::Doc);
        let r = validate_corpus(&missing);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].kind, ViolationKind::GoldenMissingDoc);

        let dup = Corpus::new(
            docs,
            vec![golden("f1", Language::Python, "a"), golden("f1", Language::Python, "b")],
            CorpusVariant::Doc,
        );
        let r = validate_corpus(&dup);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].kind, ViolationKind::DuplicateGolden);
    }

    #[test]
    fn variant_preserves_count_and_golden() {
        let docs = vec![
            doc("a", Language::Python, "# c\nx = 1", Some("# about a"), "f1"),
            doc("b", Language::Java, "int y; // c", Some("// about b"), "f2"),
            doc("c", Language::Ruby, "=begin\nz\n=end\nputs 1", None, "f3"),
        ];
        let corpus = Corpus::new(docs, vec![golden("f1", Language::Python, "a")], CorpusVariant::Doc);
        assert_eq!(make_variant(&corpus, CorpusVariant::Doc), corpus);
        let pure = make_variant(&corpus, CorpusVariant::DocNoNl);
        assert_eq!(pure.len(), 3);
        assert!(pure.documents().iter().all(|d| d.nl_comment.is_none()));
        assert_eq!(pure.golden_entries(), corpus.golden_entries());
        assert!(validate_corpus(&pure).is_clean());
        assert_eq!(make_variant(&pure, CorpusVariant::DocNoNl), pure);
    }

    #[test]
    fn document_text_concatenates_comment() {
        let d = doc("a", Language::Python, "x = 1", Some("# set x"), "f");
        assert_eq!(d.text(), "# set x\nx = 1");
        let bare = doc("a", Language::Python, "x = 1", None, "f");
        assert_eq!(bare.text(), "x = 1");
    }

    #[test]
    fn instance_validation_checks_entry_point() {
        let inst = CodeInstance {
            instance_id: "p/1".into(),
            language: Language::Python,
            nl_prompt: "add".into(),
            reference_solution: "def add(a, b):\n    return a + b\n".into(),
            test_cases: "assert add(1, 2) == 3\n".into(),
            entry_point: "add".into(),
            family_id: "1".into(),
        };
        assert!(validate_instances(std::slice::from_ref(&inst)).is_clean());
        let bad = CodeInstance {
            entry_point: "plus".into(),
            ..inst
        };
        let r = validate_instances(&[bad]);
        assert_eq!(r.violations[0].kind, ViolationKind::EntryPointMissing);
    }
}
