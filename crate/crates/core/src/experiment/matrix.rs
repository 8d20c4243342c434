use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    run_cell_reusing, CellResult, CellTemplate, ExperimentConfig, ExperimentError, MatrixConfig, Pipeline,
    ResultsTable, Setting,
};
use crate::corpus::{CodeInstance, Corpus};
use crate::lang::Language;

/// One cell to run: the table it belongs to and its concrete config.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedCell {
    /// Table name, or `baseline`.
    pub table: String,
    pub config: ExperimentConfig,
}

/// Baselines first (one per target), then every template over every
/// ordered language pair (source = target only with `include_mono`).
pub fn plan_matrix(cfg: &MatrixConfig) -> Result<Vec<PlannedCell>, ExperimentError> {
    let mut plan = Vec::new();
    let baseline = CellTemplate {
        setting: Setting::Baseline,
        retriever: None,
        mutation: None,
    };
    for &t in &cfg.languages {
        plan.push(PlannedCell {
            table: "baseline".into(),
            config: cfg.expand(&baseline, t, None)?,
        });
    }
    for template in cfg.settings.iter().filter(|t| t.setting != Setting::Baseline) {
        for &s in &cfg.languages {
            for &t in &cfg.languages {
                if s == t && !cfg.include_mono {
                    continue;
                }
                plan.push(PlannedCell {
                    table: template.table_name(),
                    config: cfg.expand(template, t, Some(s))?,
                });
            }
        }
    }
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellLogEntry {
    pub label: String,
    pub cache_key: String,
    pub cache_hit: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatrixResult {
    pub baseline: BTreeMap<Language, CellResult>,
    /// Keyed by table name (e.g. `doc/sparse`, `attack/sparse/logical`).
    pub tables: BTreeMap<String, ResultsTable>,
    /// Cells that failed, keyed by label.
    pub failures: BTreeMap<String, String>,
    /// Per-cell execution log in run order.
    pub log: Vec<CellLogEntry>,
}

fn instance_set_hash(instances: &[CodeInstance]) -> String {
    let mut lines: Vec<Vec<u8>> = instances
        .iter()
        .map(|i| serde_json::to_vec(i).expect("instance serializes"))
        .collect();
    lines.sort();
    let mut h = Sha256::new();
    for l in lines {
        h.update(&l);
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

/// Content key of a cell: its config, the corpus, the task set, the prompt
/// template and the models in use.
pub fn cache_key(config: &ExperimentConfig, corpus_hash: &str, instances_hash: &str, pipeline: &Pipeline<'_>) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config).expect("config serializes"));
    h.update(corpus_hash.as_bytes());
    h.update(instances_hash.as_bytes());
    h.update(format!("{:?}", config.template_id()).as_bytes());
    h.update(pipeline.generator.model_id().as_bytes());
    if let Some(e) = pipeline.embedder {
        h.update(e.model_id().as_bytes());
    }
    hex::encode(h.finalize())
}

fn load_cached(dir: &Path, key: &str) -> Option<CellResult> {
    let text = fs::read_to_string(dir.join(format!("{key}.json"))).ok()?;
    serde_json::from_str(&text).ok()
}

fn store_cached(dir: &Path, key: &str, cell: &CellResult) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;
    let path = dir.join(format!("{key}.json"));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| ExperimentError::io(dir, e))?;
    let body = serde_json::to_vec(cell).expect("cell serializes");
    tmp.write_all(&body).map_err(|e| ExperimentError::io(&path, e))?;
    tmp.persist(&path).map_err(|e| ExperimentError::io(&path, e.error))?;
    Ok(())
}

pub fn run_matrix(
    cfg: &MatrixConfig,
    corpus: &Corpus,
    instances: &[CodeInstance],
    pipeline: &Pipeline<'_>,
) -> Result<MatrixResult, ExperimentError> {
    let plan = plan_matrix(cfg)?;
    run_plan(&plan, corpus, instances, pipeline, cfg.cache_dir.as_deref())
}

/// Runs planned cells in the given order. Finished cells are persisted in
/// `cache_dir` and skipped on the next run; a failing cell is recorded and
/// the rest of the plan still runs. The result does not depend on the order
/// of `plan`.
pub fn run_plan(
    plan: &[PlannedCell],
    corpus: &Corpus,
    instances: &[CodeInstance],
    pipeline: &Pipeline<'_>,
    cache_dir: Option<&Path>,
) -> Result<MatrixResult, ExperimentError> {
    let corpus_hash = corpus.content_hash();
    let mut by_target: BTreeMap<Language, Vec<CodeInstance>> = BTreeMap::new();
    for inst in instances {
        by_target.entry(inst.language).or_default().push(inst.clone());
    }
    let hashes: BTreeMap<Language, String> = by_target
        .iter()
        .map(|(l, v)| (*l, instance_set_hash(v)))
        .collect();

    let mut done: BTreeMap<String, CellResult> = BTreeMap::new();
    let mut result = MatrixResult::default();
    for cell in plan {
        let label = cell.config.label();
        let target = cell.config.target_language;
        let Some(tasks) = by_target.get(&target) else {
            result.failures.insert(label.clone(), format!("no instances for {target}"));
            result.log.push(CellLogEntry {
                label,
                cache_key: String::new(),
                cache_hit: false,
                error: Some(format!("no instances for {target}")),
            });
            continue;
        };
        let key = cache_key(&cell.config, &corpus_hash, &hashes[&target], pipeline);
        let cached = cache_dir.and_then(|d| load_cached(d, &key));
        let cache_hit = cached.is_some();
        let outcome = match cached {
            Some(c) => Ok(c),
            None => {
                let clean = cell
                    .config
                    .clean_counterpart()
                    .and_then(|c| done.get(&c.label()));
                let r = run_cell_reusing(&cell.config, corpus, tasks, pipeline, clean);
                if let (Ok(c), Some(dir)) = (&r, cache_dir) {
                    store_cached(dir, &key, c)?;
                }
                r
            }
        };
        if cache_hit {
            tracing::info!(%label, "cell restored from cache");
        }
        match outcome {
            Ok(c) => {
                result.log.push(CellLogEntry {
                    label: label.clone(),
                    cache_key: key,
                    cache_hit,
                    error: None,
                });
                if cell.config.setting == Setting::Baseline {
                    result.baseline.insert(target, c.clone());
                } else if let Some(src) = cell.config.source_language {
                    result
                        .tables
                        .entry(cell.table.clone())
                        .or_default()
                        .cells
                        .insert((src, target), c.clone());
                }
                done.insert(label, c);
            }
            Err(e) => {
                tracing::warn!(%label, error = %e, "cell failed");
                result.failures.insert(label.clone(), e.to_string());
                result.log.push(CellLogEntry {
                    label,
                    cache_key: key,
                    cache_hit: false,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    for table in result.tables.values_mut() {
        table.baseline = result.baseline.clone();
    }
    Ok(result)
}
