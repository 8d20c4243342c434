use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use racg::corpus::{
    load_corpus, load_instances, make_variant, save_corpus, validate_corpus, validate_instances, verify_solutions,
    write_jsonl, CodeInstance, Corpus, CorpusVariant,
};
use racg::execute::{pass_at_k, Executor, SandboxExecutor};
use racg::experiment::{
    run_cell, run_matrix, write_reports, ExperimentConfig, MatrixConfig, MatrixResult, Pipeline, RetrieverKind,
    Setting,
};
use racg::generate::{GenerationParams, HttpGenerator};
use racg::mutate::{applicability_by_language, mutate_corpus, MutationType};
use racg::retrieve::{
    build_index, embed_query, oracle_retrieve, precision_at_k, recall_at_k, search, DenseIndex, EmbeddingClient,
    HashEmbedder, HttpEmbeddingClient, Query, RetrievalResult,
};
use racg::Language;

const GENERATION_KEY_VAR: &str = "GENERATION_API_KEY";
const EMBEDDING_KEY_VAR: &str = "EMBEDDING_API_KEY";

/// Cross-lingual retrieval-augmented code generation experiments.
#[derive(Parser)]
#[command(name = "racg", version)]
struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a corpus (and optionally an instance file) for schema violations.
    CorpusValidate {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        instances: Option<PathBuf>,
        /// Also run every reference solution against its tests.
        #[arg(long)]
        verify: bool,
    },
    /// Write the comment-free variant of a corpus.
    CorpusVariant {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Output corpus JSONL.
        #[arg(long)]
        out: PathBuf,
        /// Output golden JSONL.
        #[arg(long)]
        out_golden: PathBuf,
    },
    /// Apply one mutation operator to every document.
    Mutate {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        mutation: MutationType,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Mutated corpus JSONL; golden entries go to `<out>.golden.jsonl`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-document mutation records JSONL.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Embed one language's documents and save the vector index.
    Index {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        language: Language,
        #[command(flatten)]
        embed: EmbedArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank documents for a natural-language query.
    Search {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        query: String,
        #[arg(long)]
        source: Language,
        #[arg(long)]
        target: Option<Language>,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value = "sparse")]
        retriever: RetrieverKind,
        /// Family excluded from dense results.
        #[arg(long, default_value = "")]
        family: String,
        #[command(flatten)]
        embed: EmbedArgs,
    },
    /// Mean Precision@K and Recall@K of a retriever over an instance set.
    EvalRetrieval {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        instances: PathBuf,
        #[arg(long)]
        source: Language,
        /// Only queries from this target language.
        #[arg(long)]
        target: Option<Language>,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value = "sparse")]
        retriever: RetrieverKind,
        #[command(flatten)]
        embed: EmbedArgs,
    },
    /// Run one experiment cell.
    RunCell {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        instances: PathBuf,
        #[arg(long)]
        setting: Setting,
        #[arg(long)]
        source: Option<Language>,
        #[arg(long)]
        target: Language,
        #[arg(long)]
        retriever: Option<RetrieverKind>,
        #[arg(long)]
        mutation: Option<MutationType>,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        gen: GenArgs,
        #[command(flatten)]
        embed: EmbedArgs,
        #[arg(long)]
        jobs: Option<usize>,
        /// Cell result JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every cell of a matrix configuration and write the reports.
    RunMatrix {
        /// TOML matrix configuration.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        instances: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        /// Report directory.
        #[arg(long)]
        out: PathBuf,
        /// Write the model's request/response hashes here.
        #[arg(long)]
        audit_log: Option<PathBuf>,
    },
    /// Re-render reports from a saved matrix result.
    Report {
        /// `matrix.json` written by run-matrix.
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Unbiased pass@k estimate for n samples with c correct.
    PassAtK {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        c: u64,
        #[arg(long)]
        k: u64,
    },
    /// List which language toolchains are installed.
    Toolchains,
}

#[derive(Args)]
struct CorpusArgs {
    /// Corpus JSONL.
    #[arg(long)]
    corpus: PathBuf,
    /// Golden annotations JSONL.
    #[arg(long)]
    golden: Option<PathBuf>,
    /// Restrict documents to these languages.
    #[arg(long = "language-filter", value_delimiter = ',')]
    only: Vec<Language>,
}

#[derive(Args)]
struct GenArgs {
    /// OpenAI-compatible base URL, e.g. http://localhost:8000/v1
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    #[arg(long, default_value_t = 1024)]
    max_tokens: u32,
}

#[derive(Args)]
struct EmbedArgs {
    /// Embedding service base URL, or `hash` for the local hashing embedder.
    #[arg(long)]
    embed_endpoint: Option<String>,
}

impl EmbedArgs {
    fn client(&self) -> Result<Option<Box<dyn EmbeddingClient>>> {
        match self.embed_endpoint.as_deref() {
            None => Ok(None),
            Some("hash") => Ok(Some(Box::new(HashEmbedder::new(256)))),
            Some(url) => {
                let key = std::env::var(EMBEDDING_KEY_VAR).ok();
                let client = HttpEmbeddingClient::new(url, key, Duration::from_secs(120))?;
                Ok(Some(Box::new(client)))
            }
        }
    }

    fn require(&self) -> Result<Box<dyn EmbeddingClient>> {
        self.client()?
            .context("the embedding retriever needs --embed-endpoint (a URL or `hash`)")
    }
}

impl CorpusArgs {
    fn load(&self) -> Result<Corpus> {
        let corpus = load_corpus(&self.corpus, self.golden.as_deref(), CorpusVariant::Doc)
            .with_context(|| format!("loading {}", self.corpus.display()))?;
        if self.only.is_empty() {
            return Ok(corpus);
        }
        let docs = corpus
            .documents()
            .iter()
            .filter(|d| self.only.contains(&d.language))
            .cloned()
            .collect();
        let golden = corpus
            .golden_entries()
            .iter()
            .filter(|g| self.only.contains(&g.language))
            .cloned()
            .collect();
        Ok(Corpus::new(docs, golden, corpus.variant()))
    }
}

fn load_tasks(path: &Path) -> Result<Vec<CodeInstance>> {
    load_instances(path).with_context(|| format!("loading {}", path.display()))
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_vec_pretty(v)?).with_context(|| format!("writing {}", path.display()))
}

fn retrieve(
    corpus: &Corpus,
    query: &Query,
    k: usize,
    kind: RetrieverKind,
    dense: Option<(&DenseIndex, &dyn EmbeddingClient)>,
    sparse: Option<&racg::retrieve::SparseIndex>,
) -> Result<RetrievalResult> {
    Ok(match kind {
        RetrieverKind::Oracle => RetrievalResult {
            query_family: query.family_id.clone(),
            ranked: vec![(oracle_retrieve(corpus, query)?.doc_id.clone(), 1.0)],
            k,
        },
        RetrieverKind::Sparse => search(sparse.expect("sparse index built"), query, k),
        RetrieverKind::Embedding => {
            let (index, client) = dense.expect("dense index built");
            index.search(&embed_query(client, query)?, &query.family_id, k)?
        }
    })
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::CorpusValidate {
            corpus,
            instances,
            verify,
        } => {
            let c = corpus.load()?;
            let mut report = validate_corpus(&c);
            let tasks = match &instances {
                Some(p) => load_tasks(p)?,
                None => Vec::new(),
            };
            report.violations.extend(validate_instances(&tasks).violations);
            let verification = if verify {
                Some(verify_solutions(&tasks, &SandboxExecutor::default(), 1)?)
            } else {
                None
            };
            let unverified = verification
                .as_ref()
                .map_or(0, |v| v.entries.iter().filter(|e| !e.verified).count());
            if cli.json {
                print_json(&serde_json::json!({
                    "documents": c.len(),
                    "instances": tasks.len(),
                    "violations": report.violations,
                    "verification": verification,
                }))?;
            } else {
                println!("{} documents, {} instances", c.len(), tasks.len());
                for v in &report.violations {
                    println!("{:?}: {}", v.kind, v.message);
                }
                if let Some(ver) = &verification {
                    for e in ver.entries.iter().filter(|e| !e.verified) {
                        println!(
                            "unverified {}: {}",
                            e.instance_id,
                            e.failing_test.as_deref().unwrap_or("failed")
                        );
                    }
                    println!("{} of {} reference solutions verified", ver.entries.len() - unverified, ver.entries.len());
                }
                if report.is_clean() {
                    println!("no violations");
                }
            }
            Ok(report.is_clean() && unverified == 0)
        }
        Command::CorpusVariant {
            corpus,
            out,
            out_golden,
        } => {
            let c = make_variant(&corpus.load()?, CorpusVariant::DocNoNl);
            let report = validate_corpus(&c);
            save_corpus(&c, &out, &out_golden)?;
            println!("wrote {} documents to {}", c.len(), out.display());
            for v in &report.violations {
                eprintln!("{:?}: {}", v.kind, v.message);
            }
            Ok(report.is_clean())
        }
        Command::Mutate {
            corpus,
            mutation,
            seed,
            out,
            records,
        } => {
            let c = corpus.load()?;
            let (mutated, recs) = mutate_corpus(&c, mutation, seed);
            if let Some(p) = &out {
                let golden = p.with_extension("golden.jsonl");
                save_corpus(&mutated, p, &golden)?;
            }
            if let Some(p) = &records {
                write_jsonl(p, &recs)?;
            }
            let rates = applicability_by_language(&c, mutation);
            let applied = recs.iter().filter(|r| r.applied).count();
            if cli.json {
                let rates: BTreeMap<String, f64> = rates.iter().map(|(l, r)| (l.id().to_string(), *r)).collect();
                print_json(&serde_json::json!({
                    "mutation": mutation.id(),
                    "seed": seed,
                    "documents": recs.len(),
                    "applied": applied,
                    "applicability": rates,
                }))?;
            } else {
                println!("{mutation} (seed {seed}): applied to {applied} of {} documents", recs.len());
                for (l, r) in rates {
                    println!("{:<12} {:>6.2}%", l.id(), 100.0 * r);
                }
            }
            Ok(true)
        }
        Command::Index {
            corpus,
            language,
            embed,
            out,
        } => {
            let c = corpus.load()?;
            let client = embed.require()?;
            let docs: Vec<_> = c.in_language(language).collect();
            if docs.is_empty() {
                bail!("no {language} documents in the corpus");
            }
            let index = DenseIndex::build(client.as_ref(), &docs)?;
            index.save(&out)?;
            println!("indexed {} documents (dim {}) into {}", index.len(), index.dim(), out.display());
            Ok(true)
        }
        Command::Search {
            corpus,
            query,
            source,
            target,
            k,
            retriever,
            family,
            embed,
        } => {
            let c = corpus.load()?;
            let q = Query::new(&family, &query, target.unwrap_or(source), source);
            let client = embed.client()?;
            let sparse = (retriever == RetrieverKind::Sparse).then(|| build_index(&c, source)).transpose()?;
            let dense = match retriever {
                RetrieverKind::Embedding => {
                    let client = client.as_deref().context("the embedding retriever needs --embed-endpoint")?;
                    let docs: Vec<_> = c.in_language(source).collect();
                    Some((DenseIndex::build(client, &docs)?, client))
                }
                _ => None,
            };
            let result = retrieve(&c, &q, k, retriever, dense.as_ref().map(|(i, c)| (i, *c)), sparse.as_ref())?;
            if cli.json {
                print_json(&result)?;
            } else {
                for (rank, (id, score)) in result.ranked.iter().enumerate() {
                    println!("{:>2}. {id}  {score:.4}", rank + 1);
                }
            }
            Ok(true)
        }
        Command::EvalRetrieval {
            corpus,
            instances,
            source,
            target,
            k,
            retriever,
            embed,
        } => {
            let c = corpus.load()?;
            let tasks: Vec<CodeInstance> = load_tasks(&instances)?
                .into_iter()
                .filter(|t| target.is_none_or(|l| t.language == l))
                .collect();
            let client = embed.client()?;
            let sparse = (retriever == RetrieverKind::Sparse).then(|| build_index(&c, source)).transpose()?;
            let dense = match retriever {
                RetrieverKind::Embedding => {
                    let client = client.as_deref().context("the embedding retriever needs --embed-endpoint")?;
                    let docs: Vec<_> = c.in_language(source).collect();
                    Some((DenseIndex::build(client, &docs)?, client))
                }
                _ => None,
            };
            let (mut p_sum, mut r_sum, mut n) = (0.0, 0.0, 0usize);
            for t in &tasks {
                let Some(gold) = c.golden_doc_id(&t.family_id, source) else {
                    continue;
                };
                let golden: HashSet<String> = [gold.to_string()].into();
                let q = Query::new(&t.family_id, &t.nl_prompt, t.language, source);
                let result = retrieve(&c, &q, k, retriever, dense.as_ref().map(|(i, c)| (i, *c)), sparse.as_ref())?;
                p_sum += precision_at_k(&result, &golden, k);
                r_sum += recall_at_k(&result, &golden, 1, k);
                n += 1;
            }
            if n == 0 {
                bail!("no instance has a golden {source} document");
            }
            let (p, r) = (100.0 * p_sum / n as f64, 100.0 * r_sum / n as f64);
            if cli.json {
                print_json(&serde_json::json!({
                    "retriever": retriever.id(),
                    "source": source.id(),
                    "k": k,
                    "queries": n,
                    "precision_at_k": p,
                    "recall_at_k": r,
                }))?;
            } else {
                println!("{} over {n} queries: P@{k} {p:.2}%, R@{k} {r:.2}%", retriever.id());
            }
            Ok(true)
        }
        Command::RunCell {
            corpus,
            instances,
            setting,
            source,
            target,
            retriever,
            mutation,
            k,
            seed,
            gen,
            embed,
            jobs,
            out,
        } => {
            let c = corpus.load()?;
            let tasks: Vec<CodeInstance> = load_tasks(&instances)?
                .into_iter()
                .filter(|t| t.language == target)
                .collect();
            let params = generation_params(&gen)?;
            let config = ExperimentConfig {
                setting,
                source_language: source,
                target_language: target,
                k,
                seed,
                mutation,
                retriever,
                generation: params.clone(),
                prompt_budget_chars: None,
            }
            .normalized()?;
            let generator = HttpGenerator::new(params, std::env::var(GENERATION_KEY_VAR).ok())?;
            let executor = SandboxExecutor::default();
            let embedder = embed.client()?;
            let pipeline = Pipeline {
                generator: &generator,
                executor: &executor as &dyn Executor,
                embedder: embedder.as_deref(),
                vector_cache_dir: None,
                jobs: jobs.unwrap_or(4),
            };
            let cell = run_cell(&config, &c, &tasks, &pipeline)?;
            if let Some(p) = &out {
                write_json(p, &cell)?;
            }
            if cli.json {
                print_json(&cell)?;
            } else {
                println!(
                    "{}: {} of {} pass ({:.2}%)",
                    config.label(),
                    cell.n_pass(),
                    cell.n_tasks,
                    cell.pass_rate
                );
            }
            Ok(true)
        }
        Command::RunMatrix {
            config,
            corpus,
            instances,
            jobs,
            out,
            audit_log,
        } => {
            let mut cfg = MatrixConfig::load(&config)?;
            if let Some(j) = jobs {
                cfg.jobs = j;
            }
            let c = corpus.load()?;
            let tasks = load_tasks(&instances)?;
            let mut generator = HttpGenerator::new(cfg.generation.clone(), std::env::var(GENERATION_KEY_VAR).ok())?;
            if let Some(p) = &audit_log {
                generator = generator.with_audit_log(p)?;
            }
            let embedder: Option<Box<dyn EmbeddingClient>> = match &cfg.embedding {
                Some(e) => EmbedArgs {
                    embed_endpoint: Some(e.endpoint.clone()),
                }
                .client()?,
                None => None,
            };
            let executor = SandboxExecutor::default();
            let pipeline = Pipeline {
                generator: &generator,
                executor: &executor,
                embedder: embedder.as_deref(),
                vector_cache_dir: cfg.cache_dir.clone(),
                jobs: cfg.jobs,
            };
            let result = run_matrix(&cfg, &c, &tasks, &pipeline)?;
            write_json(&out.join("matrix.json"), &result)?;
            let files = write_reports(&result, &out)?;
            for (label, err) in &result.failures {
                eprintln!("failed {label}: {err}");
            }
            let hits = result.log.iter().filter(|e| e.cache_hit).count();
            println!(
                "{} cells ({hits} from cache, {} failed); report at {}",
                result.log.len(),
                result.failures.len(),
                files.markdown.display()
            );
            Ok(result.failures.is_empty())
        }
        Command::Report { matrix, out } => {
            let text = std::fs::read_to_string(&matrix).with_context(|| format!("reading {}", matrix.display()))?;
            let result: MatrixResult = serde_json::from_str(&text).context("parsing matrix result")?;
            let files = write_reports(&result, &out)?;
            println!("wrote {}", files.markdown.display());
            Ok(true)
        }
        Command::PassAtK { n, c, k } => {
            let v = pass_at_k(n, c, k)?;
            if cli.json {
                print_json(&serde_json::json!({ "n": n, "c": c, "k": k, "pass_at_k": v }))?;
            } else {
                println!("{v}");
            }
            Ok(true)
        }
        Command::Toolchains => {
            let report = racg::execute::RunnerRegistry::defaults().probe();
            if cli.json {
                let missing: BTreeMap<&str, &str> = report.missing.iter().map(|(l, p)| (l.id(), p.as_str())).collect();
                let available: Vec<&str> = report.available.iter().map(|l| l.id()).collect();
                print_json(&serde_json::json!({ "available": available, "missing": missing }))?;
            } else {
                for l in &report.available {
                    println!("{:<12} ok", l.id());
                }
                for (l, p) in &report.missing {
                    println!("{:<12} missing `{p}`", l.id());
                }
            }
            Ok(true)
        }
    }
}

fn generation_params(gen: &GenArgs) -> Result<GenerationParams> {
    let (Some(endpoint), Some(model)) = (&gen.endpoint, &gen.model) else {
        bail!("generation needs --endpoint and --model");
    };
    let mut p = GenerationParams::new(model, endpoint);
    p.temperature = gen.temperature;
    p.max_tokens = gen.max_tokens;
    Ok(p)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
