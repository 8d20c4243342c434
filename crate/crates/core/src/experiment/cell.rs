use std::collections::HashMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ExperimentConfig, ExperimentError, RetrieverKind, Setting};
use crate::corpus::{make_variant, CodeDocument, CodeInstance, Corpus, CorpusVariant};
use crate::execute::{Executor, Verdict};
use crate::generate::{build_prompt_within, extract_code, ContextDoc, ExtractionMethod, GenerateError, Generator, PromptSpec};
use crate::lang::Language;
use crate::mutate::{perturb_retrieved, MutationRecord};
use crate::retrieve::{
    build_index, embed_query, oracle_retrieve, search, DenseIndex, EmbeddingClient, Query, RetrieveError,
};

/// External services and limits shared by every cell of a run.
pub struct Pipeline<'a> {
    pub generator: &'a dyn Generator,
    pub executor: &'a dyn Executor,
    pub embedder: Option<&'a dyn EmbeddingClient>,
    /// Where document vectors are cached between runs.
    pub vector_cache_dir: Option<PathBuf>,
    /// Worker count for generation and execution within a cell.
    pub jobs: usize,
}

/// The audit trail of one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub family_id: String,
    pub instance_id: String,
    pub verdict: Verdict,
    /// Context documents in prompt order.
    pub retrieved: Vec<String>,
    /// One flag per retrieved document; empty outside attack cells.
    pub mutation_applied: Vec<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mutations: Vec<MutationRecord>,
    pub extraction: Option<ExtractionMethod>,
    pub dropped_context: usize,
    pub prompt_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub config: ExperimentConfig,
    /// Percentage of tasks that pass.
    pub pass_rate: f64,
    pub n_tasks: usize,
    /// Sorted by family id, then instance id.
    pub per_task: Vec<TaskRecord>,
}

impl CellResult {
    pub fn n_pass(&self) -> usize {
        self.per_task.iter().filter(|t| t.verdict.is_pass()).count()
    }

    pub fn source(&self) -> Option<Language> {
        self.config.source_language
    }

    pub fn target(&self) -> Language {
        self.config.target_language
    }
}

pub(crate) fn pass_rate(n_pass: usize, n_tasks: usize) -> f64 {
    if n_tasks == 0 {
        0.0
    } else {
        100.0 * n_pass as f64 / n_tasks as f64
    }
}

enum Retriever<'c> {
    None,
    Oracle,
    Sparse(crate::retrieve::SparseIndex),
    Dense(DenseIndex, &'c dyn EmbeddingClient),
}

fn vector_cache_name(corpus: &Corpus, client: &dyn EmbeddingClient, language: Language) -> String {
    let mut h = Sha256::new();
    h.update(corpus.content_hash().as_bytes());
    h.update(client.model_id().as_bytes());
    format!("vectors-{}-{}.bin", language.id(), &hex::encode(h.finalize())[..16])
}

/// Runs every instance of one cell through retrieval, optional
/// perturbation, prompting, generation, extraction and execution.
pub fn run_cell(
    config: &ExperimentConfig,
    corpus: &Corpus,
    instances: &[CodeInstance],
    pipeline: &Pipeline<'_>,
) -> Result<CellResult, ExperimentError> {
    run_cell_reusing(config, corpus, instances, pipeline, None)
}

/// Like [`run_cell`]; an attack cell given its clean counterpart's result
/// perturbs exactly the documents that cell retrieved.
pub fn run_cell_reusing(
    config: &ExperimentConfig,
    corpus: &Corpus,
    instances: &[CodeInstance],
    pipeline: &Pipeline<'_>,
    clean: Option<&CellResult>,
) -> Result<CellResult, ExperimentError> {
    config.validate()?;
    if instances.is_empty() {
        return Err(ExperimentError::EmptyTaskSet(config.label()));
    }
    if let Some(bad) = instances.iter().find(|i| i.language != config.target_language) {
        return Err(ExperimentError::InvalidConfig(format!(
            "instance `{}` is {} but the cell targets {}",
            bad.instance_id, bad.language, config.target_language
        )));
    }

    let variant_corpus;
    let corpus = match (config.setting, corpus.variant()) {
        (Setting::DocNoNl, CorpusVariant::Doc) => {
            variant_corpus = make_variant(corpus, CorpusVariant::DocNoNl);
            &variant_corpus
        }
        _ => corpus,
    };

    let source = config.source_language;
    let retriever = match (config.retriever, source) {
        (None, _) | (_, None) => Retriever::None,
        (Some(RetrieverKind::Oracle), _) => Retriever::Oracle,
        (Some(RetrieverKind::Sparse), Some(src)) => Retriever::Sparse(
            build_index(corpus, src).map_err(|e| ExperimentError::retrieve(config, "*", e))?,
        ),
        (Some(RetrieverKind::Embedding), Some(src)) => {
            let client = pipeline.embedder.ok_or_else(|| {
                ExperimentError::InvalidConfig("embedding retriever selected but no embedding service configured".into())
            })?;
            let docs = crate::retrieve::source_docs(corpus, src).map_err(|e| ExperimentError::retrieve(config, "*", e))?;
            let index = match &pipeline.vector_cache_dir {
                Some(dir) => DenseIndex::build_cached(client, &docs, &dir.join(vector_cache_name(corpus, client, src))),
                None => DenseIndex::build(client, &docs),
            }
            .map_err(|e| ExperimentError::retrieve(config, "*", e))?;
            Retriever::Dense(index, client)
        }
    };

    let reused: HashMap<&str, &TaskRecord> = clean
        .map(|c| c.per_task.iter().map(|t| (t.instance_id.as_str(), t)).collect())
        .unwrap_or_default();

    // Retrieval is cheap and runs serially; generation and execution fan out.
    let mut prepared = Vec::with_capacity(instances.len());
    for inst in instances {
        let docs = match reused.get(inst.instance_id.as_str()) {
            Some(prior) => prior
                .retrieved
                .iter()
                .map(|id| {
                    corpus.get(id).cloned().ok_or_else(|| {
                        ExperimentError::retrieve(config, &inst.family_id, RetrieveError::UnknownDoc(id.clone()))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?,
            None => retrieve_for(config, corpus, inst, &retriever)?,
        };
        let (docs, mutations) = match config.mutation {
            Some(m) => {
                let (docs, records) = perturb_retrieved(&docs, m, config.seed);
                (docs, records)
            }
            None => (docs, Vec::new()),
        };
        prepared.push((inst, docs, mutations));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(pipeline.jobs.max(1))
        .build()
        .expect("thread pool");
    let records: Vec<Result<TaskRecord, ExperimentError>> = pool.install(|| {
        prepared
            .into_par_iter()
            .map(|(inst, docs, mutations)| run_task(config, inst, docs, mutations, pipeline))
            .collect()
    });
    let mut per_task = records.into_iter().collect::<Result<Vec<_>, _>>()?;
    per_task.sort_by(|a, b| (&a.family_id, &a.instance_id).cmp(&(&b.family_id, &b.instance_id)));
    let n_tasks = per_task.len();
    let n_pass = per_task.iter().filter(|t| t.verdict.is_pass()).count();
    Ok(CellResult {
        config: config.clone(),
        pass_rate: pass_rate(n_pass, n_tasks),
        n_tasks,
        per_task,
    })
}

fn retrieve_for(
    config: &ExperimentConfig,
    corpus: &Corpus,
    inst: &CodeInstance,
    retriever: &Retriever<'_>,
) -> Result<Vec<CodeDocument>, ExperimentError> {
    let Some(source) = config.source_language else {
        return Ok(Vec::new());
    };
    let query = Query::new(&inst.family_id, &inst.nl_prompt, config.target_language, source);
    let err = |e| ExperimentError::retrieve(config, &inst.family_id, e);
    let ids: Vec<String> = match retriever {
        Retriever::None => return Ok(Vec::new()),
        Retriever::Oracle => return Ok(vec![oracle_retrieve(corpus, &query).map_err(err)?.clone()]),
        Retriever::Sparse(index) => search(index, &query, config.k).ranked.into_iter().map(|(d, _)| d).collect(),
        Retriever::Dense(index, client) => {
            let qv = embed_query(*client, &query).map_err(err)?;
            index
                .search(&qv, &inst.family_id, config.k)
                .map_err(err)?
                .ranked
                .into_iter()
                .map(|(d, _)| d)
                .collect()
        }
    };
    Ok(ids
        .iter()
        .filter_map(|id| corpus.get(id).cloned())
        .collect())
}

fn run_task(
    config: &ExperimentConfig,
    inst: &CodeInstance,
    docs: Vec<CodeDocument>,
    mutations: Vec<MutationRecord>,
    pipeline: &Pipeline<'_>,
) -> Result<TaskRecord, ExperimentError> {
    let spec = PromptSpec {
        query_text: inst.nl_prompt.clone(),
        target_language: config.target_language,
        context_docs: docs
            .iter()
            .map(|d| ContextDoc {
                language: d.language,
                text: d.text().into_owned(),
            })
            .collect(),
        template_id: config.template_id(),
    };
    let built = build_prompt_within(&spec, config.prompt_budget_chars.unwrap_or(usize::MAX))
        .map_err(|e| ExperimentError::generate(config, &inst.family_id, e))?;
    let mut record = TaskRecord {
        family_id: inst.family_id.clone(),
        instance_id: inst.instance_id.clone(),
        verdict: Verdict::TestFailure,
        retrieved: docs.iter().map(|d| d.doc_id.clone()).collect(),
        mutation_applied: mutations.iter().map(|m| m.applied).collect(),
        mutations,
        extraction: None,
        dropped_context: built.dropped_docs,
        prompt_sha256: hex::encode(Sha256::digest(built.text.as_bytes())),
        note: None,
    };
    let response = pipeline
        .generator
        .generate(&built.text)
        .map_err(|e| ExperimentError::generate(config, &inst.family_id, e))?;
    let outcome = match extract_code(&response, config.target_language) {
        Ok(o) => o,
        Err(GenerateError::EmptyResponse) => {
            record.note = Some("empty model response".into());
            return Ok(record);
        }
        Err(e) => return Err(ExperimentError::generate(config, &inst.family_id, e)),
    };
    record.extraction = Some(outcome.extraction_method);
    let code = outcome.extracted_code.unwrap_or_default();
    let result = pipeline
        .executor
        .execute(&code, inst)
        .map_err(|e| ExperimentError::execute(config, &inst.family_id, e))?;
    record.verdict = result.verdict;
    if !result.verdict.is_pass() {
        record.note = Some(result.failure_line());
    }
    Ok(record)
}
