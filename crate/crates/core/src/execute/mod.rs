//! Sandboxed execution of candidate programs against per-instance test
//! harnesses, and the Pass@K estimator.

mod assemble;
mod passk;
mod runner;
mod sandbox;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::CodeInstance;
use crate::lang::Language;

pub use assemble::{assemble_program, SourceFiles};
pub use passk::{pass_at_k, DomainError};
pub use runner::{LanguageRunner, RunnerRegistry, ToolchainReport};
pub use sandbox::{run_tests, SandboxConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    CompileError,
    RuntimeError,
    TestFailure,
    Timeout,
    SandboxError,
}

impl Verdict {
    pub fn is_pass(self) -> bool {
        self == Verdict::Pass
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::CompileError => "compile_error",
            Verdict::RuntimeError => "runtime_error",
            Verdict::TestFailure => "test_failure",
            Verdict::Timeout => "timeout",
            Verdict::SandboxError => "sandbox_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub verdict: Verdict,
    pub stdout_tail: String,
    pub stderr_tail: String,
    /// Seconds, compile plus run.
    pub wall_time: f64,
}

impl ExecutionResult {
    /// Most informative single line of output for a failed run.
    pub fn failure_line(&self) -> String {
        let lines = || self.stderr_tail.lines().chain(self.stdout_tail.lines());
        lines()
            .find(|l| l.contains("Assert") || l.contains("assert") || l.contains("FAIL"))
            .or_else(|| self.stderr_tail.lines().rev().find(|l| !l.trim().is_empty()))
            .or_else(|| self.stdout_tail.lines().rev().find(|l| !l.trim().is_empty()))
            .map(|l| l.trim().to_string())
            .unwrap_or_else(|| self.verdict.as_str().to_string())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error("no toolchain for {language}: `{program}` not found")]
    SandboxUnavailable { language: Language, program: String },
    #[error("no runner configured for {0}")]
    NoRunner(Language),
    #[error("sandbox setup failed: {0}")]
    Sandbox(#[source] std::io::Error),
    #[error("runner configuration: {0}")]
    Config(String),
}

/// Anything that can run a candidate program against an instance's tests.
pub trait Executor: Sync {
    fn execute(&self, code: &str, instance: &CodeInstance) -> Result<ExecutionResult, ExecError>;
}

/// Executes through per-language subprocess runners.
#[derive(Debug, Clone)]
pub struct SandboxExecutor {
    pub registry: RunnerRegistry,
    pub config: SandboxConfig,
}

impl SandboxExecutor {
    pub fn new(registry: RunnerRegistry) -> Self {
        SandboxExecutor {
            registry,
            config: SandboxConfig::default(),
        }
    }
}

impl Default for SandboxExecutor {
    fn default() -> Self {
        SandboxExecutor::new(RunnerRegistry::defaults())
    }
}

impl Executor for SandboxExecutor {
    fn execute(&self, code: &str, instance: &CodeInstance) -> Result<ExecutionResult, ExecError> {
        let runner = self
            .registry
            .get(instance.language)
            .ok_or(ExecError::NoRunner(instance.language))?;
        let files = assemble_program(code, instance, runner);
        run_tests(&files, runner, &self.config)
    }
}

/// One unit of work for [`run_batch`].
#[derive(Debug, Clone)]
pub struct ExecTask<'a> {
    pub task_id: String,
    pub code: String,
    pub instance: &'a CodeInstance,
}

/// Runs tasks on a pool of `jobs` workers. Results come back in input order
/// regardless of completion order.
pub fn run_batch(
    executor: &dyn Executor,
    tasks: &[ExecTask<'_>],
    jobs: usize,
) -> Vec<(String, Result<ExecutionResult, ExecError>)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| {
        tasks
            .par_iter()
            .map(|t| (t.task_id.clone(), executor.execute(&t.code, t.instance)))
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionLogEntry {
    pub task_id: String,
    pub language: Language,
    pub verdict: Verdict,
    pub wall_time: f64,
}

pub fn write_execution_log(path: &Path, entries: &[ExecutionLogEntry]) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}
