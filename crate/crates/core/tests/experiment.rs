mod common;

use std::sync::atomic::{AtomicUsize, Ordering};

use common::{problems, EchoTopGenerator, ReferenceExecutor};
use racg::corpus::{CodeInstance, Corpus};
use racg::experiment::{
    categories_csv, category_tables, delta_table, plan_matrix, run_cell, run_matrix, CellTemplate, ExperimentConfig,
    MatrixConfig, Pipeline, RetrieverKind, Setting,
};
use racg::generate::{GenerateError, GenerationParams, Generator};
use racg::mutate::MutationType;
use racg::Language;

const LANGS: [Language; 2] = [Language::Python, Language::JavaScript];

fn small() -> (Corpus, Vec<CodeInstance>) {
    let (corpus, instances) = problems();
    let tasks = instances
        .into_iter()
        .filter(|i| LANGS.contains(&i.language) && i.family_id.as_str() < "f012")
        .collect();
    (corpus, tasks)
}

fn template(setting: Setting, retriever: Option<RetrieverKind>, mutation: Option<MutationType>) -> CellTemplate {
    CellTemplate {
        setting,
        retriever,
        mutation,
    }
}

fn matrix(settings: Vec<CellTemplate>) -> MatrixConfig {
    MatrixConfig {
        languages: LANGS.to_vec(),
        settings,
        include_mono: false,
        k: 2,
        seed: 42,
        jobs: 2,
        prompt_budget_chars: None,
        generation: GenerationParams::new("echo-top1", "http://mock"),
        embedding: None,
        cache_dir: None,
    }
}

struct Counting<'a> {
    inner: &'a dyn Generator,
    calls: AtomicUsize,
}

impl Generator for Counting<'_> {
    fn generate(&self, prompt: &str) -> Result<String, GenerateError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.generate(prompt)
    }

    fn model_id(&self) -> String {
        self.inner.model_id()
    }
}

/// Fails whenever the prompt carries JavaScript context.
struct RefusesJavaScript;

impl Generator for RefusesJavaScript {
    fn generate(&self, prompt: &str) -> Result<String, GenerateError> {
        if prompt.contains("(JavaScript):") {
            return Err(GenerateError::Service {
                status: Some(500),
                message: "boom".into(),
            });
        }
        EchoTopGenerator.generate(prompt)
    }

    fn model_id(&self) -> String {
        "refuses-js".into()
    }
}

fn pipeline<'a>(generator: &'a dyn Generator, executor: &'a ReferenceExecutor) -> Pipeline<'a> {
    Pipeline {
        generator,
        executor,
        embedder: None,
        vector_cache_dir: None,
        jobs: 2,
    }
}

#[test]
fn cross_only_plan_has_one_cell_per_ordered_pair() {
    let cfg = matrix(vec![template(Setting::Doc, Some(RetrieverKind::Sparse), None)]);
    let plan = plan_matrix(&cfg).unwrap();
    assert_eq!(plan.len(), 4);
    assert_eq!(plan.iter().filter(|p| p.table == "baseline").count(), 2);
    for p in plan.iter().filter(|p| p.table != "baseline") {
        assert_ne!(p.config.source_language, Some(p.config.target_language));
        assert_eq!(p.table, "doc/sparse");
    }
    let mut mono = cfg.clone();
    mono.include_mono = true;
    assert_eq!(plan_matrix(&mono).unwrap().len(), 6);
}

#[test]
fn cached_cells_are_reused_on_resume() {
    let (corpus, tasks) = small();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = matrix(vec![
        template(Setting::Doc, Some(RetrieverKind::Sparse), None),
        template(Setting::Attack, Some(RetrieverKind::Sparse), Some(MutationType::Syntax)),
    ]);
    cfg.cache_dir = Some(dir.path().to_path_buf());
    let executor = ReferenceExecutor;
    let gen = Counting {
        inner: &EchoTopGenerator,
        calls: AtomicUsize::new(0),
    };
    let first = run_matrix(&cfg, &corpus, &tasks, &pipeline(&gen, &executor)).unwrap();
    let calls = gen.calls.load(Ordering::SeqCst);
    assert!(calls > 0);
    assert!(first.log.iter().all(|e| !e.cache_hit));

    let second = run_matrix(&cfg, &corpus, &tasks, &pipeline(&gen, &executor)).unwrap();
    assert_eq!(gen.calls.load(Ordering::SeqCst), calls);
    assert!(second.log.iter().all(|e| e.cache_hit));
    assert_eq!(first.tables, second.tables);
    assert_eq!(first.baseline, second.baseline);

    // A different model must not hit the cache.
    let other = Counting {
        inner: &RefusesJavaScript,
        calls: AtomicUsize::new(0),
    };
    let third = run_matrix(&cfg, &corpus, &tasks, &pipeline(&other, &executor)).unwrap();
    assert!(third.log.iter().all(|e| !e.cache_hit));
}

#[test]
fn failing_cells_do_not_stop_the_matrix() {
    let (corpus, tasks) = small();
    let cfg = matrix(vec![template(Setting::Doc, Some(RetrieverKind::Sparse), None)]);
    let executor = ReferenceExecutor;
    let result = run_matrix(&cfg, &corpus, &tasks, &pipeline(&RefusesJavaScript, &executor)).unwrap();
    assert_eq!(result.failures.len(), 1);
    let failed = result.failures.keys().next().unwrap();
    assert_eq!(failed, "doc/sparse/javascript->python");
    assert_eq!(result.baseline.len(), 2);
    let table = &result.tables["doc/sparse"];
    assert_eq!(table.cells.len(), 1);
    assert!(table.cells.contains_key(&(Language::Python, Language::JavaScript)));
    assert_eq!(result.log.len(), 4);
    assert_eq!(result.log.iter().filter(|e| e.error.is_some()).count(), 1);
}

#[test]
fn unmutated_context_reproduces_the_clean_cell() {
    let (corpus, tasks) = small();
    let cfg = matrix(vec![
        template(Setting::Doc, Some(RetrieverKind::Sparse), None),
        template(Setting::Attack, Some(RetrieverKind::Sparse), Some(MutationType::ControlFlow)),
    ]);
    let executor = ReferenceExecutor;
    let result = run_matrix(&cfg, &corpus, &tasks, &pipeline(&EchoTopGenerator, &executor)).unwrap();
    assert!(result.failures.is_empty());
    let clean = &result.tables["doc/sparse"];
    let attack = &result.tables["attack/sparse/controlflow"];
    let mut untouched = 0;
    for (pair, a) in &attack.cells {
        let c = &clean.cells[pair];
        assert_eq!(a.n_tasks, c.n_tasks);
        for (ta, tc) in a.per_task.iter().zip(&c.per_task) {
            assert_eq!(ta.instance_id, tc.instance_id);
            assert_eq!(ta.retrieved, tc.retrieved);
            if ta.mutation_applied.iter().all(|m| !m) {
                untouched += 1;
                assert_eq!(ta.prompt_sha256, tc.prompt_sha256);
                assert_eq!(ta.verdict, tc.verdict);
            }
        }
    }
    assert!(untouched > 0);

    for (_, cats) in category_tables(&result).unwrap() {
        let cell = &attack.cells[&(cats.source.unwrap(), cats.target)];
        assert_eq!(cats.counts.values().sum::<usize>(), cell.n_tasks);
        assert_eq!(cats.counts.len(), 8);
    }
    let csv = categories_csv(&result).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 8);
}

#[test]
fn a_cell_equal_to_its_baseline_has_zero_delta() {
    let (corpus, tasks) = small();
    let executor = ReferenceExecutor;
    let p = pipeline(&EchoTopGenerator, &executor);
    let py: Vec<CodeInstance> = tasks.iter().filter(|t| t.language == Language::Python).cloned().collect();
    let gen = GenerationParams::new("echo-top1", "http://mock");
    let baseline = run_cell(&ExperimentConfig::baseline(Language::Python, gen.clone()), &corpus, &py, &p).unwrap();
    assert_eq!(baseline.pass_rate, 0.0);
    let mut copy = baseline.clone();
    copy.config = ExperimentConfig {
        setting: Setting::Doc,
        source_language: Some(Language::JavaScript),
        retriever: Some(RetrieverKind::Sparse),
        ..baseline.config.clone()
    };
    let table = racg::experiment::ResultsTable {
        cells: [((Language::JavaScript, Language::Python), copy)].into(),
        baseline: [(Language::Python, baseline)].into(),
    };
    let d = delta_table(&table).unwrap();
    let cell = &d.cells[&(Language::JavaScript, Language::Python)];
    assert_eq!(cell.delta_pp, 0.0);
    assert_eq!(cell.relative_pct, None);
    assert_eq!(d.grand_mean.delta_pp, 0.0);
}

#[test]
fn oracle_context_in_the_target_language_passes() {
    let (corpus, tasks) = small();
    let executor = ReferenceExecutor;
    let p = pipeline(&EchoTopGenerator, &executor);
    let js: Vec<CodeInstance> = tasks.iter().filter(|t| t.language == Language::JavaScript).cloned().collect();
    let cfg = ExperimentConfig {
        setting: Setting::Injection,
        source_language: Some(Language::JavaScript),
        retriever: Some(RetrieverKind::Oracle),
        ..ExperimentConfig::baseline(Language::JavaScript, GenerationParams::new("echo-top1", "http://mock"))
    };
    let cell = run_cell(&cfg, &corpus, &js, &p).unwrap();
    assert_eq!(cell.pass_rate, 100.0);
    assert!(cell.per_task.iter().all(|t| t.retrieved.len() == 1 && t.retrieved[0] == t.instance_id));
}

#[test]
fn matrix_config_reads_toml() {
    let cfg = MatrixConfig::from_toml_str(
        r#"
languages = ["python", "java"]
include_mono = true
k = 3
jobs = 4

[generation]
model_name = "coder"
endpoint = "http://localhost:8000/v1"

[[settings]]
setting = "injection"

[[settings]]
setting = "attack"
retriever = "sparse"
mutation = "logical"
"#,
    )
    .unwrap();
    assert_eq!(cfg.languages, vec![Language::Python, Language::Java]);
    assert_eq!(cfg.seed, 42);
    assert_eq!(cfg.generation.temperature, 0.0);
    let plan = plan_matrix(&cfg).unwrap();
    assert_eq!(plan.len(), 2 + 4 + 4);
    let injection = plan.iter().find(|p| p.table == "injection").unwrap();
    assert_eq!(injection.config.retriever, Some(RetrieverKind::Oracle));

    let bad = MatrixConfig::from_toml_str(
        r#"
languages = ["python"]
[generation]
model_name = "m"
endpoint = "e"
[[settings]]
setting = "attack"
retriever = "sparse"
"#,
    );
    assert!(bad.is_err());
}
